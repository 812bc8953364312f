// Copyright (c) 2026 promptmr authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace promptmr {

/// Malformed configuration, CLI flags, or schema violations. CLI exit code 2.
class config_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Unreadable or inconsistent data files (volumes, manifests, checkpoints). CLI exit code 3.
class data_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace promptmr

// Copyright (c) 2026 promptmr authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>

#include "promptmr/core/error.hpp"
#include "promptmr/phantom/sequence.hpp"

namespace promptmr {

enum class Sex { M, F };

inline const char* sex_code(Sex s) { return s == Sex::M ? "M" : "F"; }
inline Sex sex_from_code(const std::string& s) {
    if (s == "M") return Sex::M;
    if (s == "F") return Sex::F;
    throw data_error("unknown sex code: " + s);
}

/// Subject demographics plus the imaging parameters of one scan; the source
/// record for prompt construction and the sidecar JSON schema.
struct ScanMetadata {
    double age_years = 0;
    Sex sex = Sex::F;
    double field_strength_T = 3.0;
    std::string scanner;
    std::array<double, 3> voxel_mm{1.0, 1.0, 1.0};
    double tr_ms = 0;
    double te_ms = 0;
    std::optional<double> ti_ms;
    double fa_deg = 90.0;
    Modality modality = Modality::T1w;

    void validate() const {
        auto finite = [](double v) { return std::isfinite(v); };
        if (!finite(age_years) || age_years < 0 || age_years > 120)
            throw data_error("ScanMetadata: age_years must be in [0, 120]");
        if (!finite(field_strength_T) || !finite(tr_ms) || !finite(te_ms) || !finite(fa_deg))
            throw data_error("ScanMetadata: non-finite numeric field");
        if (ti_ms && !finite(*ti_ms)) throw data_error("ScanMetadata: non-finite ti_ms");
        for (double v : voxel_mm)
            if (!finite(v) || v <= 0) throw data_error("ScanMetadata: voxel_mm must be positive");
        if (scanner.find('{') != std::string::npos || scanner.find('}') != std::string::npos)
            throw data_error("ScanMetadata: scanner name must not contain braces");
    }

    SequenceParams sequence_params() const {
        SequenceParams p;
        p.modality = modality;
        p.tr_ms = tr_ms;
        p.te_ms = te_ms;
        p.ti_ms = ti_ms;
        p.fa_deg = fa_deg;
        p.field_strength_T = field_strength_T;
        p.scanner = scanner;
        p.voxel_mm = voxel_mm;
        return p;
    }

    static ScanMetadata from_sequence(const SequenceParams& p, double age_years, Sex sex) {
        ScanMetadata m;
        m.age_years = age_years;
        m.sex = sex;
        m.field_strength_T = p.field_strength_T;
        m.scanner = p.scanner;
        m.voxel_mm = p.voxel_mm;
        m.tr_ms = p.tr_ms;
        m.te_ms = p.te_ms;
        m.ti_ms = p.ti_ms;
        m.fa_deg = p.fa_deg;
        m.modality = p.modality;
        return m;
    }
};

} // namespace promptmr

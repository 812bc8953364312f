// Copyright (c) 2026 promptmr authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "promptmr/core/error.hpp"
#include "promptmr/phantom/volume.hpp"

namespace promptmr {

// RVOL: 64-byte header, then raw voxels in x-fastest order.
//   offset  0: magic "RVOL1\0"           (6 bytes)
//   offset  6: dims                      (3 x uint32 LE)
//   offset 18: spacing_mm                (3 x float32 LE)
//   offset 30: dtype tag, 0 = float32 LE (uint32)
//   offset 34: zero padding to 64 bytes

namespace rvol {

constexpr char kMagic[6] = {'R', 'V', 'O', 'L', '1', '\0'};
constexpr std::size_t kHeaderSize = 64;
constexpr std::uint32_t kDtypeFloat32 = 0;

inline void write(const std::filesystem::path& path, const Volume& v) {
    v.validate_finite();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw data_error("rvol: cannot open for writing: " + path.string());
    char header[kHeaderSize] = {};
    std::memcpy(header, kMagic, 6);
    std::size_t off = 6;
    for (int i = 0; i < 3; ++i) {
        const std::uint32_t d = static_cast<std::uint32_t>(v.dims[static_cast<std::size_t>(i)]);
        std::memcpy(header + off, &d, 4);
        off += 4;
    }
    for (int i = 0; i < 3; ++i) {
        const float s = static_cast<float>(v.spacing_mm[static_cast<std::size_t>(i)]);
        std::memcpy(header + off, &s, 4);
        off += 4;
    }
    std::memcpy(header + off, &kDtypeFloat32, 4);
    f.write(header, kHeaderSize);
    std::vector<float> payload(v.voxels.size());
    for (std::size_t i = 0; i < payload.size(); ++i) payload[i] = static_cast<float>(v.voxels[i]);
    f.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(float)));
    if (!f) throw data_error("rvol: write failure: " + path.string());
}

inline Volume read(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw data_error("rvol: cannot open: " + path.string());
    char header[kHeaderSize];
    f.read(header, kHeaderSize);
    if (!f) throw data_error("rvol: truncated header: " + path.string());
    if (std::memcmp(header, kMagic, 6) != 0) throw data_error("rvol: bad magic: " + path.string());
    std::array<std::size_t, 3> dims;
    std::size_t off = 6;
    for (int i = 0; i < 3; ++i) {
        std::uint32_t d;
        std::memcpy(&d, header + off, 4);
        off += 4;
        dims[static_cast<std::size_t>(i)] = d;
    }
    std::array<double, 3> spacing;
    for (int i = 0; i < 3; ++i) {
        float s;
        std::memcpy(&s, header + off, 4);
        off += 4;
        spacing[static_cast<std::size_t>(i)] = s;
    }
    std::uint32_t dtype;
    std::memcpy(&dtype, header + off, 4);
    if (dtype != kDtypeFloat32) throw data_error("rvol: unsupported dtype tag: " + path.string());
    Volume v(dims, spacing);
    std::vector<float> payload(v.size());
    f.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size() * sizeof(float)));
    if (!f) throw data_error("rvol: truncated payload: " + path.string());
    for (std::size_t i = 0; i < payload.size(); ++i) v.voxels[i] = payload[i];
    v.validate_finite();
    return v;
}

} // namespace rvol
} // namespace promptmr

// Copyright (c) 2026 promptmr authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "promptmr/core/error.hpp"

namespace promptmr {

/// 3D scalar grid with voxel spacing; the universal image carrier.
/// Voxels are stored x-fastest: index(x,y,z) = x + nx*(y + ny*z).
/// All grids are cell-centered: voxel i spans [i-0.5, i+0.5] in index space,
/// and resampling between grids keeps the physical extent fixed.
struct Volume {
    std::array<std::size_t, 3> dims{0, 0, 0};
    std::array<double, 3> spacing_mm{1.0, 1.0, 1.0};
    std::vector<double> voxels;

    Volume() = default;
    Volume(std::array<std::size_t, 3> d, std::array<double, 3> sp, double fill = 0.0)
        : dims(d), spacing_mm(sp), voxels(d[0] * d[1] * d[2], fill) {
        validate_dims();
    }

    std::size_t size() const { return voxels.size(); }

    std::size_t index(std::size_t x, std::size_t y, std::size_t z) const {
        return x + dims[0] * (y + dims[1] * z);
    }
    double& at(std::size_t x, std::size_t y, std::size_t z) { return voxels[index(x, y, z)]; }
    double at(std::size_t x, std::size_t y, std::size_t z) const { return voxels[index(x, y, z)]; }

    void validate_dims() const {
        if (dims[0] < 1 || dims[1] < 1 || dims[2] < 1) throw data_error("Volume: dims must be >= 1 per axis");
    }

    void validate_finite() const {
        for (double v : voxels)
            if (!std::isfinite(v)) throw data_error("Volume: non-finite voxel value");
    }

    double min() const {
        double m = voxels.empty() ? 0.0 : voxels[0];
        for (double v : voxels) m = std::min(m, v);
        return m;
    }
    double max() const {
        double m = voxels.empty() ? 0.0 : voxels[0];
        for (double v : voxels) m = std::max(m, v);
        return m;
    }
};

/// Trilinear sample at a cell-centered index-space position (clamped borders).
inline double sample_trilinear(const Volume& v, double x, double y, double z) {
    auto clampd = [](double t, double lo, double hi) { return t < lo ? lo : (t > hi ? hi : t); };
    x = clampd(x, 0.0, static_cast<double>(v.dims[0] - 1));
    y = clampd(y, 0.0, static_cast<double>(v.dims[1] - 1));
    z = clampd(z, 0.0, static_cast<double>(v.dims[2] - 1));
    const std::size_t x0 = static_cast<std::size_t>(x), y0 = static_cast<std::size_t>(y), z0 = static_cast<std::size_t>(z);
    const std::size_t x1 = std::min(x0 + 1, v.dims[0] - 1);
    const std::size_t y1 = std::min(y0 + 1, v.dims[1] - 1);
    const std::size_t z1 = std::min(z0 + 1, v.dims[2] - 1);
    const double fx = x - static_cast<double>(x0), fy = y - static_cast<double>(y0), fz = z - static_cast<double>(z0);
    auto lerp = [](double a, double b, double t) { return a + (b - a) * t; };
    const double c00 = lerp(v.at(x0, y0, z0), v.at(x1, y0, z0), fx);
    const double c10 = lerp(v.at(x0, y1, z0), v.at(x1, y1, z0), fx);
    const double c01 = lerp(v.at(x0, y0, z1), v.at(x1, y0, z1), fx);
    const double c11 = lerp(v.at(x0, y1, z1), v.at(x1, y1, z1), fx);
    return lerp(lerp(c00, c10, fy), lerp(c01, c11, fy), fz);
}

/// Resample onto a new grid over the same physical extent (cell-centered).
/// out voxel j center maps to input position (j+0.5)*n_in/n_out - 0.5.
inline Volume resample(const Volume& v, std::array<std::size_t, 3> out_dims, std::array<double, 3> out_spacing) {
    Volume out(out_dims, out_spacing);
    for (std::size_t z = 0; z < out_dims[2]; ++z) {
        const double sz = (static_cast<double>(z) + 0.5) * static_cast<double>(v.dims[2]) / static_cast<double>(out_dims[2]) - 0.5;
        for (std::size_t y = 0; y < out_dims[1]; ++y) {
            const double sy = (static_cast<double>(y) + 0.5) * static_cast<double>(v.dims[1]) / static_cast<double>(out_dims[1]) - 0.5;
            for (std::size_t x = 0; x < out_dims[0]; ++x) {
                const double sx = (static_cast<double>(x) + 0.5) * static_cast<double>(v.dims[0]) / static_cast<double>(out_dims[0]) - 0.5;
                out.at(x, y, z) = sample_trilinear(v, sx, sy, sz);
            }
        }
    }
    return out;
}

/// Separable Gaussian blur with per-axis sigma in voxel units. Kernels are
/// truncated at ceil(3*sigma) and normalized to sum 1, so constant volumes
/// are preserved. sigma <= 0 on an axis skips that axis.
inline Volume gaussian_blur(const Volume& v, std::array<double, 3> sigma) {
    Volume cur = v;
    for (int axis = 0; axis < 3; ++axis) {
        const double s = sigma[static_cast<std::size_t>(axis)];
        if (s <= 0.0) continue;
        const long r = static_cast<long>(std::ceil(3.0 * s));
        std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
        double sum = 0;
        for (long i = -r; i <= r; ++i) {
            k[static_cast<std::size_t>(i + r)] = std::exp(-0.5 * (static_cast<double>(i) / s) * (static_cast<double>(i) / s));
            sum += k[static_cast<std::size_t>(i + r)];
        }
        for (double& w : k) w /= sum;
        Volume next(cur.dims, cur.spacing_mm);
        const long n[3] = {static_cast<long>(cur.dims[0]), static_cast<long>(cur.dims[1]), static_cast<long>(cur.dims[2])};
        for (long z = 0; z < n[2]; ++z)
            for (long y = 0; y < n[1]; ++y)
                for (long x = 0; x < n[0]; ++x) {
                    double acc = 0;
                    for (long i = -r; i <= r; ++i) {
                        long c[3] = {x, y, z};
                        // clamp-to-edge padding keeps the kernel mass inside
                        c[axis] = std::clamp(c[axis] + i, 0L, n[axis] - 1);
                        acc += k[static_cast<std::size_t>(i + r)] *
                               cur.at(static_cast<std::size_t>(c[0]), static_cast<std::size_t>(c[1]), static_cast<std::size_t>(c[2]));
                    }
                    next.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y), static_cast<std::size_t>(z)) = acc;
                }
        cur = std::move(next);
    }
    return cur;
}

} // namespace promptmr

// Copyright (c) 2026 promptmr authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <vector>

#include "promptmr/synth/model.hpp"

namespace promptmr {

/// Continuous-space decode request against a feature grid. Coordinates are
/// normalized to [-1, 1] per axis over the grid extent; `cell` is the target
/// voxel extent in the same normalized units.
struct CoordinateQuery {
    std::vector<std::array<double, 3>> coords;
    std::array<double, 3> cell{0, 0, 0};
};

namespace liif_detail {

/// Normalized coordinate -> cell-centered voxel-index coordinate.
inline double to_index_space(double c, std::size_t edge) {
    return (c + 1.0) * 0.5 * static_cast<double>(edge) - 0.5;
}

} // namespace liif_detail

/// Local implicit decoding: each query takes its nearest feature vector, the
/// offset to that feature's center (voxel units), and the target cell size
/// (voxel units), through the MLP to one intensity. Queries at exact grid
/// centers have offset exactly zero.
inline ad::Var liif_decode(BoundParams& p, const LiifConfig& cfg, ad::Var features, ad::Dims3 dims,
                           const CoordinateQuery& query) {
    const std::size_t q = query.coords.size();
    if (q == 0) throw data_error("liif_decode: empty query");
    std::vector<std::size_t> nearest(q);
    Tensor geo = Tensor::zeros({q, 6}); // offset xyz, cell xyz
    const std::size_t edges[3] = {dims.x, dims.y, dims.z};
    for (std::size_t i = 0; i < q; ++i) {
        std::size_t flat[3];
        for (int a = 0; a < 3; ++a) {
            const std::size_t e = edges[a];
            const double t = liif_detail::to_index_space(query.coords[i][static_cast<std::size_t>(a)], e);
            if (t < -0.5 - 1e-9 || t > static_cast<double>(e) - 0.5 + 1e-9)
                throw data_error("liif_decode: coordinate outside the feature grid");
            long gidx = std::llround(t);
            gidx = std::clamp(gidx, 0L, static_cast<long>(e) - 1L);
            flat[a] = static_cast<std::size_t>(gidx);
            geo(i, static_cast<std::size_t>(a)) = t - static_cast<double>(gidx);
            geo(i, static_cast<std::size_t>(3 + a)) =
                query.cell[static_cast<std::size_t>(a)] * 0.5 * static_cast<double>(e);
        }
        nearest[i] = flat[0] + dims.x * (flat[1] + dims.y * flat[2]);
    }
    ad::Graph& g = *features.g;
    ad::Var x = ad::concat_cols({ad::gather_rows(features, nearest), g.leaf(std::move(geo), false)});
    for (std::size_t l = 0; l < cfg.hidden_dims.size(); ++l) {
        const std::string pre = "syn.liif.l" + std::to_string(l);
        x = ad::relu(ad::add_rowvec(ad::matmul(x, p[pre + ".w"]), p[pre + ".b"]));
    }
    return ad::add_rowvec(ad::matmul(x, p["syn.liif.out.w"]), p["syn.liif.out.b"]); // [q, 1]
}

/// Normalized coordinate of the grid center g on an axis with `edge` cells.
inline double grid_center_coord(std::size_t g, std::size_t edge) {
    return (2.0 * static_cast<double>(g) + 1.0) / static_cast<double>(edge) - 1.0;
}

} // namespace promptmr

// Copyright (c) 2026 promptmr authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>

#include "promptmr/prompt/bpe.hpp"
#include "promptmr/synth/liif.hpp"

namespace promptmr {

/// Output grid size under the arbitrary-scale contract.
inline std::array<std::size_t, 3> scaled_dims(const std::array<std::size_t, 3>& dims,
                                              const std::array<double, 3>& scale) {
    std::array<std::size_t, 3> out{};
    for (int i = 0; i < 3; ++i) {
        const std::size_t k = static_cast<std::size_t>(i);
        out[k] = static_cast<std::size_t>(std::ceil(static_cast<double>(dims[k]) * scale[k]));
    }
    return out;
}

/// Conditioning vector for one synthesis request: the frozen text tower's
/// embedding of the target prompt, or a one-hot category indicator.
inline Tensor conditioning_row(const SynthesisModel& model, const ScanMetadata& target_meta, int onehot_label,
                               const BpeTokenizer& tok) {
    if (model.cfg.conditioning.kind == ConditioningKind::TextPrompt) {
        const TokenSequence seq = tokenize(build_prompt(target_meta), tok, model.text_cfg.context_length);
        return encode_text_value(model.text_params, model.text_cfg, seq);
    }
    const int n = model.cfg.conditioning.category_count;
    if (onehot_label < 0 || onehot_label >= n)
        throw data_error("conditioning_row: one-hot label " + std::to_string(onehot_label) + " outside [0, " +
                         std::to_string(n) + ")");
    Tensor row = Tensor::zeros({1, static_cast<std::size_t>(n)});
    row.data[static_cast<std::size_t>(onehot_label)] = 1.0;
    return row;
}

namespace synth_detail {

inline std::vector<std::size_t> patch_origins(std::size_t n, std::size_t p, std::size_t stride) {
    std::vector<std::size_t> origins;
    for (std::size_t o = 0;; o += stride) {
        if (o + p >= n) {
            if (origins.empty() || origins.back() != n - p) origins.push_back(n - p);
            break;
        }
        origins.push_back(o);
    }
    return origins;
}

/// Linear feather: weight ramps from face to full strength over the overlap
/// width; strictly positive everywhere so border voxels covered by a single
/// patch are well defined.
inline double feather_weight(double t, std::size_t p, std::size_t overlap) {
    if (overlap == 0) return 1.0;
    const double d = std::min(t + 0.5, static_cast<double>(p) - 0.5 - t);
    return std::min(1.0, (d + 0.5) / (static_cast<double>(overlap) + 0.5));
}

} // namespace synth_detail

/// Whole-volume synthesis: overlapping patch_edge^3 tiles through the CNN
/// encoder, cross-attention conditioning, and the implicit decoder over the
/// target lattice, blended with linear feathering. Blending is a running
/// weighted mean, so a decoder emitting a constant produces that constant
/// exactly. Output dims are ceil(input dims * scale), spacing is divided by
/// the scale.
inline Volume synthesize(const Volume& input, const Tensor& cond_row, const std::array<double, 3>& scale,
                         const SynthesisModel& model) {
    model.cfg.validate();
    input.validate_finite();
    for (double s : scale)
        if (!(s >= 1.0)) throw data_error("synthesize: scale components must be >= 1");
    if (cond_row.rows() != 1 || cond_row.cols() != static_cast<std::size_t>(model.conditioning_dim()))
        throw data_error("synthesize: conditioning vector has wrong width");
    const std::size_t p = static_cast<std::size_t>(model.cfg.cnn.patch_edge);
    for (std::size_t d : input.dims)
        if (d < p) throw data_error("synthesize: patch larger than volume");

    const std::array<std::size_t, 3> out_dims = scaled_dims(input.dims, scale);
    Volume out(out_dims, {input.spacing_mm[0] / scale[0], input.spacing_mm[1] / scale[1],
                          input.spacing_mm[2] / scale[2]});
    std::vector<double> wsum(out.size(), 0.0);

    const std::size_t overlap = static_cast<std::size_t>(model.cfg.overlap());
    const std::size_t stride = p - overlap;
    const std::vector<std::size_t> ox = synth_detail::patch_origins(input.dims[0], p, stride);
    const std::vector<std::size_t> oy = synth_detail::patch_origins(input.dims[1], p, stride);
    const std::vector<std::size_t> oz = synth_detail::patch_origins(input.dims[2], p, stride);
    const ad::Dims3 pdims{p, p, p};

    // Output voxel centers in input index space: u_j = (j+0.5) * n/N - 0.5.
    auto center = [&](std::size_t j, int axis) {
        return (static_cast<double>(j) + 0.5) * static_cast<double>(input.dims[static_cast<std::size_t>(axis)]) /
                   static_cast<double>(out_dims[static_cast<std::size_t>(axis)]) -
               0.5;
    };
    auto covered_range = [&](std::size_t origin, int axis, std::size_t& jlo, std::size_t& jhi) {
        const double n = static_cast<double>(input.dims[static_cast<std::size_t>(axis)]);
        const double nn = static_cast<double>(out_dims[static_cast<std::size_t>(axis)]);
        const double lo = static_cast<double>(origin) * nn / n - 0.5;
        const double hi = (static_cast<double>(origin) + static_cast<double>(p)) * nn / n - 0.5;
        jlo = static_cast<std::size_t>(std::max(0.0, std::ceil(lo - 1e-9)));
        jhi = static_cast<std::size_t>(std::min(nn - 1.0, std::floor(hi + 1e-9)));
    };

    for (std::size_t z0 : oz)
        for (std::size_t y0 : oy)
            for (std::size_t x0 : ox) {
                Tensor patch = Tensor::zeros({p * p * p, 1});
                for (std::size_t z = 0; z < p; ++z)
                    for (std::size_t y = 0; y < p; ++y)
                        for (std::size_t x = 0; x < p; ++x)
                            patch.data[x + p * (y + p * z)] = input.at(x0 + x, y0 + y, z0 + z);

                std::size_t jxl, jxh, jyl, jyh, jzl, jzh;
                covered_range(x0, 0, jxl, jxh);
                covered_range(y0, 1, jyl, jyh);
                covered_range(z0, 2, jzl, jzh);
                if (jxl > jxh || jyl > jyh || jzl > jzh) continue;

                CoordinateQuery query;
                for (int a = 0; a < 3; ++a)
                    query.cell[static_cast<std::size_t>(a)] =
                        2.0 * static_cast<double>(input.dims[static_cast<std::size_t>(a)]) /
                        (static_cast<double>(out_dims[static_cast<std::size_t>(a)]) * static_cast<double>(p));
                std::vector<std::size_t> out_index;
                std::vector<double> weight;
                for (std::size_t jz = jzl; jz <= jzh; ++jz)
                    for (std::size_t jy = jyl; jy <= jyh; ++jy)
                        for (std::size_t jx = jxl; jx <= jxh; ++jx) {
                            const double tx = center(jx, 0) - static_cast<double>(x0);
                            const double ty = center(jy, 1) - static_cast<double>(y0);
                            const double tz = center(jz, 2) - static_cast<double>(z0);
                            query.coords.push_back({(tx + 0.5) * 2.0 / static_cast<double>(p) - 1.0,
                                                    (ty + 0.5) * 2.0 / static_cast<double>(p) - 1.0,
                                                    (tz + 0.5) * 2.0 / static_cast<double>(p) - 1.0});
                            out_index.push_back(jx + out_dims[0] * (jy + out_dims[1] * jz));
                            weight.push_back(synth_detail::feather_weight(tx, p, overlap) *
                                             synth_detail::feather_weight(ty, p, overlap) *
                                             synth_detail::feather_weight(tz, p, overlap));
                        }

                ad::Graph g;
                BoundParams bp(g, model.params, /*trainable=*/false);
                ad::Var feats = encode_image_cnn(g, bp, model.cfg.cnn, g.leaf(std::move(patch), false), pdims);
                ad::Var att = cross_attend(bp, adapt_conditioning(bp, g.leaf(cond_row, false)), feats,
                                           model.cfg.xattn_heads);
                ad::Var pred = liif_decode(bp, model.cfg.liif, att, pdims, query);
                const Tensor& vals = pred.val();

                // Running weighted mean keeps blending of equal values exact.
                for (std::size_t i = 0; i < out_index.size(); ++i) {
                    const std::size_t oi = out_index[i];
                    wsum[oi] += weight[i];
                    out.voxels[oi] += (weight[i] / wsum[oi]) * (vals.data[i] - out.voxels[oi]);
                }
            }
    return out;
}

/// Text-prompt (or one-hot) convenience wrapper.
inline Volume synthesize(const Volume& input, const ScanMetadata& target_meta, const std::array<double, 3>& scale,
                         const SynthesisModel& model, const BpeTokenizer& tok, int onehot_label = 0) {
    return synthesize(input, conditioning_row(model, target_meta, onehot_label, tok), scale, model);
}

} // namespace promptmr

// Copyright (c) 2026 promptmr authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "promptmr/encoders/attention.hpp"
#include "promptmr/phantom/volume.hpp"

namespace promptmr {

/// 3D vision transformer for stage-1 image embedding: non-overlapping cubic
/// tokens, class-token pooling, projection to the joint width, L2 norm.
/// Full-scale reference configuration is 16^3 tokens / 12 layers / 12 heads /
/// width 768 / mlp 3072 over a 96-edge input.
struct ViTConfig {
    int token_size = 8;
    int layers = 4;
    int heads = 4;
    int width = 128;
    int mlp_dim = 512;
    int input_edge = 32;
    int embed_dim = 64;

    void validate() const {
        if (token_size < 1 || layers < 1 || heads < 1 || width < 1 || mlp_dim < 1 || input_edge < 1 || embed_dim < 1)
            throw config_error("ViTConfig: all fields must be positive");
        if (input_edge % token_size != 0) throw config_error("ViTConfig: input_edge must be divisible by token_size");
        if (width % heads != 0) throw config_error("ViTConfig: width must be divisible by heads");
    }

    int tokens_per_axis() const { return input_edge / token_size; }
    int token_count() const { return tokens_per_axis() * tokens_per_axis() * tokens_per_axis(); }
    int token_dim() const { return token_size * token_size * token_size; }
};

inline void init_vit3d(ParamStore& ps, const ViTConfig& cfg, Rng root) {
    cfg.validate();
    const double w_std = 0.02;
    Tensor& pw = ps.add("vit.patch.w", {static_cast<std::size_t>(cfg.token_dim()), static_cast<std::size_t>(cfg.width)});
    init_normal(pw, root.fork("vit.patch.w"), w_std);
    ps.add("vit.patch.b", {static_cast<std::size_t>(cfg.width)});
    Tensor& cls = ps.add("vit.cls", {1, static_cast<std::size_t>(cfg.width)});
    init_normal(cls, root.fork("vit.cls"), w_std);
    Tensor& pos = ps.add("vit.pos_emb",
                         {static_cast<std::size_t>(cfg.token_count() + 1), static_cast<std::size_t>(cfg.width)});
    init_normal(pos, root.fork("vit.pos_emb"), 0.01);
    for (int l = 0; l < cfg.layers; ++l)
        init_block_params(ps, "vit.blk" + std::to_string(l), cfg.width, cfg.mlp_dim, root, w_std);
    init_constant(ps.add("vit.lnf.g", {static_cast<std::size_t>(cfg.width)}), 1.0);
    ps.add("vit.lnf.b", {static_cast<std::size_t>(cfg.width)});
    Tensor& proj = ps.add("vit.proj", {static_cast<std::size_t>(cfg.width), static_cast<std::size_t>(cfg.embed_dim)});
    init_normal(proj, root.fork("vit.proj"), w_std);
}

/// Cubic tokenization: token index is x-fastest over the token grid, voxels
/// within a token are x-fastest as well.
inline Tensor vit_tokenize_volume(const ViTConfig& cfg, const Volume& vol) {
    const std::size_t edge = static_cast<std::size_t>(cfg.input_edge);
    if (vol.dims[0] != edge || vol.dims[1] != edge || vol.dims[2] != edge)
        throw data_error("encode_image_vit: volume edge must equal cfg.input_edge (" +
                         std::to_string(cfg.input_edge) + "), got " + std::to_string(vol.dims[0]) + "x" +
                         std::to_string(vol.dims[1]) + "x" + std::to_string(vol.dims[2]));
    const std::size_t ts = static_cast<std::size_t>(cfg.token_size);
    const std::size_t n = static_cast<std::size_t>(cfg.tokens_per_axis());
    Tensor tokens = Tensor::zeros({n * n * n, ts * ts * ts});
    for (std::size_t tz = 0; tz < n; ++tz)
        for (std::size_t ty = 0; ty < n; ++ty)
            for (std::size_t tx = 0; tx < n; ++tx) {
                const std::size_t t = tx + n * (ty + n * tz);
                for (std::size_t lz = 0; lz < ts; ++lz)
                    for (std::size_t ly = 0; ly < ts; ++ly)
                        for (std::size_t lx = 0; lx < ts; ++lx) {
                            const std::size_t c = lx + ts * (ly + ts * lz);
                            tokens(t, c) = vol.at(tx * ts + lx, ty * ts + ly, tz * ts + lz);
                        }
            }
    return tokens;
}

/// Forward pass to a unit-norm [1, embed_dim] embedding. The caller is
/// responsible for any downscale/crop that brings the volume to input_edge.
inline ad::Var encode_image_vit(ad::Graph& g, BoundParams& p, const ViTConfig& cfg, const Volume& vol) {
    vol.validate_finite();
    ad::Var tokens = g.leaf(vit_tokenize_volume(cfg, vol), false);
    ad::Var x = ad::add_rowvec(ad::matmul(tokens, p["vit.patch.w"]), p["vit.patch.b"]);
    x = ad::concat_rows({p["vit.cls"], x});
    x = ad::add(x, p["vit.pos_emb"]);
    for (int l = 0; l < cfg.layers; ++l)
        x = transformer_block(p, "vit.blk" + std::to_string(l), x, cfg.heads, /*causal=*/false);
    x = ad::layernorm(x, p["vit.lnf.g"], p["vit.lnf.b"]);
    ad::Var pooled = ad::gather_rows(x, {0});
    return ad::l2norm_rows(ad::matmul(pooled, p["vit.proj"]));
}

inline Tensor encode_image_vit_value(const ParamStore& ps, const ViTConfig& cfg, const Volume& vol) {
    ad::Graph g;
    BoundParams p(g, ps, /*trainable=*/false);
    return encode_image_vit(g, p, cfg, vol).val();
}

/// Stage-1 input preparation: downscale by half per axis when the volume is
/// larger than the ViT input, then center-crop/pad to the input cube.
inline Volume prepare_for_vit(const ViTConfig& cfg, const Volume& vol) {
    Volume cur = vol;
    const std::size_t edge = static_cast<std::size_t>(cfg.input_edge);
    while (cur.dims[0] > 2 * edge || cur.dims[1] > 2 * edge || cur.dims[2] > 2 * edge) {
        std::array<std::size_t, 3> half{};
        std::array<double, 3> sp{};
        for (int i = 0; i < 3; ++i) {
            const std::size_t k = static_cast<std::size_t>(i);
            half[k] = std::max<std::size_t>(1, cur.dims[k] / 2);
            sp[k] = cur.spacing_mm[k] * 2.0;
        }
        cur = resample(cur, half, sp);
    }
    if (cur.dims[0] == edge && cur.dims[1] == edge && cur.dims[2] == edge) return cur;
    Volume out({edge, edge, edge}, cur.spacing_mm);
    for (std::size_t z = 0; z < edge; ++z)
        for (std::size_t y = 0; y < edge; ++y)
            for (std::size_t x = 0; x < edge; ++x) {
                // center alignment; outside source bounds stays zero
                const long sx = static_cast<long>(x) + (static_cast<long>(cur.dims[0]) - static_cast<long>(edge)) / 2;
                const long sy = static_cast<long>(y) + (static_cast<long>(cur.dims[1]) - static_cast<long>(edge)) / 2;
                const long sz = static_cast<long>(z) + (static_cast<long>(cur.dims[2]) - static_cast<long>(edge)) / 2;
                if (sx < 0 || sy < 0 || sz < 0 || sx >= static_cast<long>(cur.dims[0]) ||
                    sy >= static_cast<long>(cur.dims[1]) || sz >= static_cast<long>(cur.dims[2]))
                    continue;
                out.at(x, y, z) = cur.at(static_cast<std::size_t>(sx), static_cast<std::size_t>(sy),
                                         static_cast<std::size_t>(sz));
            }
    return out;
}

inline std::size_t vit3d_parameter_count(const ViTConfig& cfg) {
    const std::size_t w = static_cast<std::size_t>(cfg.width);
    std::size_t n = static_cast<std::size_t>(cfg.token_dim()) * w + w; // patch embed
    n += w;                                                            // class token
    n += static_cast<std::size_t>(cfg.token_count() + 1) * w;          // positions
    n += static_cast<std::size_t>(cfg.layers) * block_parameter_count(cfg.width, cfg.mlp_dim);
    n += 2 * w;                                                        // final norm
    n += w * static_cast<std::size_t>(cfg.embed_dim);                  // projection
    return n;
}

} // namespace promptmr

// Copyright (c) 2026 promptmr authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "promptmr/core/ops.hpp"
#include "promptmr/encoders/params.hpp"
#include "promptmr/phantom/volume.hpp"

namespace promptmr {

/// Dense per-voxel feature grid; spatial dims always equal the input patch.
struct FeatureGrid {
    Tensor values; // [voxels, channels], x-fastest voxel order
    ad::Dims3 dims;
};

/// Residual CNN image encoder with no downsampling anywhere: a 3x3x3 stem,
/// n_res_layers 3x3x3 convolutions arranged as pre-activation residual pairs,
/// and a 1x1x1 projection to the feature width. Full-scale reference is
/// 24 layers / hidden 256 / out 768 over 64^3 patches.
struct CnnEncoderConfig {
    int n_res_layers = 6;
    int hidden = 32;
    int out_dim = 64;
    int patch_edge = 16;

    void validate() const {
        if (n_res_layers < 2 || hidden < 1 || out_dim < 1 || patch_edge < 1)
            throw config_error("CnnEncoderConfig: all fields must be positive (and n_res_layers >= 2)");
        if (n_res_layers % 2 != 0)
            throw config_error("CnnEncoderConfig: n_res_layers must be even (two convolutions per block)");
    }

    int blocks() const { return n_res_layers / 2; }
};

inline void init_cnn_encoder(ParamStore& ps, const CnnEncoderConfig& cfg, Rng root) {
    cfg.validate();
    const std::size_t h = static_cast<std::size_t>(cfg.hidden);
    auto he_std = [](std::size_t fan_in) { return std::sqrt(2.0 / static_cast<double>(fan_in)); };
    Tensor& stem = ps.add("cnn.stem.w", {27, h});
    init_normal(stem, root.fork("cnn.stem.w"), he_std(27));
    ps.add("cnn.stem.b", {h});
    for (int b = 0; b < cfg.blocks(); ++b) {
        const std::string pre = "cnn.blk" + std::to_string(b);
        init_constant(ps.add(pre + ".ln1.g", {h}), 1.0);
        ps.add(pre + ".ln1.b", {h});
        Tensor& w1 = ps.add(pre + ".conv1.w", {27 * h, h});
        init_normal(w1, root.fork(pre + ".conv1.w"), he_std(27 * h));
        ps.add(pre + ".conv1.b", {h});
        init_constant(ps.add(pre + ".ln2.g", {h}), 1.0);
        ps.add(pre + ".ln2.b", {h});
        Tensor& w2 = ps.add(pre + ".conv2.w", {27 * h, h});
        init_normal(w2, root.fork(pre + ".conv2.w"), he_std(27 * h));
        ps.add(pre + ".conv2.b", {h});
    }
    Tensor& proj = ps.add("cnn.proj.w", {h, static_cast<std::size_t>(cfg.out_dim)});
    init_normal(proj, root.fork("cnn.proj.w"), he_std(h));
    ps.add("cnn.proj.b", {static_cast<std::size_t>(cfg.out_dim)});
}

/// Forward pass over a [voxels, 1] patch; preserves spatial dims throughout.
inline ad::Var encode_image_cnn(ad::Graph& g, BoundParams& p, const CnnEncoderConfig& cfg, ad::Var patch,
                                ad::Dims3 dims) {
    const std::size_t e = static_cast<std::size_t>(cfg.patch_edge);
    if (dims.x != e || dims.y != e || dims.z != e)
        throw data_error("encode_image_cnn: patch dims must equal patch_edge^3 (" + std::to_string(cfg.patch_edge) +
                         "), got " + std::to_string(dims.x) + "x" + std::to_string(dims.y) + "x" +
                         std::to_string(dims.z));
    if (patch.val().rows() != dims.count() || patch.val().cols() != 1)
        throw data_error("encode_image_cnn: patch tensor must be [voxels, 1]");
    ad::Var x = ad::conv3d(patch, p["cnn.stem.w"], p["cnn.stem.b"], dims);
    for (int b = 0; b < cfg.blocks(); ++b) {
        const std::string pre = "cnn.blk" + std::to_string(b);
        ad::Var h = ad::layernorm(x, p[pre + ".ln1.g"], p[pre + ".ln1.b"]);
        h = ad::relu(h);
        h = ad::conv3d(h, p[pre + ".conv1.w"], p[pre + ".conv1.b"], dims);
        h = ad::layernorm(h, p[pre + ".ln2.g"], p[pre + ".ln2.b"]);
        h = ad::relu(h);
        h = ad::conv3d(h, p[pre + ".conv2.w"], p[pre + ".conv2.b"], dims);
        x = ad::add(x, h);
    }
    return ad::add_rowvec(ad::matmul(x, p["cnn.proj.w"]), p["cnn.proj.b"]);
}

/// Value-only forward over a Volume patch.
inline FeatureGrid encode_image_cnn_value(const ParamStore& ps, const CnnEncoderConfig& cfg, const Volume& patch) {
    patch.validate_finite();
    ad::Dims3 dims{patch.dims[0], patch.dims[1], patch.dims[2]};
    Tensor x = Tensor::zeros({patch.size(), 1});
    for (std::size_t i = 0; i < patch.size(); ++i) x.data[i] = patch.voxels[i];
    ad::Graph g;
    BoundParams p(g, ps, /*trainable=*/false);
    ad::Var out = encode_image_cnn(g, p, cfg, g.leaf(std::move(x), false), dims);
    return FeatureGrid{out.val(), dims};
}

inline std::size_t cnn_encoder_parameter_count(const CnnEncoderConfig& cfg) {
    const std::size_t h = static_cast<std::size_t>(cfg.hidden);
    std::size_t n = 27 * h + h; // stem
    n += static_cast<std::size_t>(cfg.blocks()) * (2 * (2 * h) + 2 * (27 * h * h + h));
    n += h * static_cast<std::size_t>(cfg.out_dim) + static_cast<std::size_t>(cfg.out_dim);
    return n;
}

} // namespace promptmr

// Copyright (c) 2026 promptmr authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>

#include "promptmr/encoders/cnn3d.hpp"
#include "promptmr/encoders/text_encoder.hpp"

namespace promptmr {

/// Implicit-decoder MLP widths (four hidden layers, then a linear scalar
/// head). Full-scale reference: 3072, 3072, 768, 256 over 768-dim features.
struct LiifConfig {
    std::vector<int> hidden_dims{256, 256, 64, 32};

    static LiifConfig scaled_to(int feat_dim) {
        LiifConfig c;
        c.hidden_dims = {4 * feat_dim, 4 * feat_dim, feat_dim, std::max(feat_dim / 3, 4)};
        return c;
    }

    void validate() const {
        if (hidden_dims.empty()) throw config_error("LiifConfig: at least one hidden layer required");
        for (int d : hidden_dims)
            if (d < 1) throw config_error("LiifConfig: hidden dims must be positive");
    }
};

enum class ConditioningKind { TextPrompt, OneHot };

/// Text-prompt conditioning embeds the target metadata through the frozen
/// stage-1 text tower; the one-hot baseline replaces it with a category
/// indicator (one integer label per (center, modality) pair).
struct ConditioningMode {
    ConditioningKind kind = ConditioningKind::TextPrompt;
    int category_count = 0;

    void validate() const {
        if (kind == ConditioningKind::OneHot && category_count < 1)
            throw config_error("ConditioningMode: one_hot needs category_count >= 1");
    }
};

struct SynthesisConfig {
    CnnEncoderConfig cnn;
    int xattn_heads = 4;
    LiifConfig liif;
    ConditioningMode conditioning;
    int inference_overlap = -1; // voxels; -1 = patch_edge / 4

    int overlap() const { return inference_overlap < 0 ? cnn.patch_edge / 4 : inference_overlap; }

    void validate() const {
        cnn.validate();
        liif.validate();
        conditioning.validate();
        if (xattn_heads < 1 || cnn.out_dim % xattn_heads != 0)
            throw config_error("SynthesisConfig: out_dim must be divisible by xattn_heads");
        if (overlap() < 0 || overlap() >= cnn.patch_edge)
            throw config_error("SynthesisConfig: overlap must be in [0, patch_edge)");
    }
};

/// Stage-2 model: trainable CNN/adapter/attention/decoder parameters plus the
/// frozen stage-1 text tower held in a separate store (never touched by the
/// stage-2 optimizer).
struct SynthesisModel {
    SynthesisConfig cfg;
    TextEncoderConfig text_cfg;
    ParamStore params;      // trainable: cnn.* and syn.*
    ParamStore text_params; // frozen stage-1 text tower

    int conditioning_dim() const {
        return cfg.conditioning.kind == ConditioningKind::TextPrompt ? text_cfg.embed_dim
                                                                     : cfg.conditioning.category_count;
    }

    static SynthesisModel init(const SynthesisConfig& cfg, const TextEncoderConfig& text_cfg,
                               ParamStore text_params, std::uint64_t seed) {
        cfg.validate();
        SynthesisModel m;
        m.cfg = cfg;
        m.text_cfg = text_cfg;
        m.text_params = std::move(text_params);
        Rng root(seed);
        init_cnn_encoder(m.params, cfg.cnn, root.fork("init-cnn"));

        const std::size_t d = static_cast<std::size_t>(cfg.cnn.out_dim);
        const std::size_t cond = static_cast<std::size_t>(m.conditioning_dim());
        Tensor& aw = m.params.add("syn.adapter.w", {cond, d});
        init_normal(aw, root.fork("syn.adapter.w"), 0.02);
        m.params.add("syn.adapter.b", {d});
        for (const char* nm : {"syn.xattn.wq", "syn.xattn.wk", "syn.xattn.wv", "syn.xattn.wo"}) {
            Tensor& w = m.params.add(nm, {d, d});
            init_normal(w, root.fork(nm), 0.02);
        }
        for (const char* nm : {"syn.xattn.bq", "syn.xattn.bk", "syn.xattn.bv", "syn.xattn.bo"})
            m.params.add(nm, {d});

        std::size_t in_dim = d + 6; // feature + offset(3) + cell(3)
        for (std::size_t l = 0; l < cfg.liif.hidden_dims.size(); ++l) {
            const std::size_t h = static_cast<std::size_t>(cfg.liif.hidden_dims[l]);
            const std::string pre = "syn.liif.l" + std::to_string(l);
            Tensor& w = m.params.add(pre + ".w", {in_dim, h});
            init_normal(w, root.fork(pre + ".w"), std::sqrt(2.0 / static_cast<double>(in_dim)));
            m.params.add(pre + ".b", {h});
            in_dim = h;
        }
        Tensor& ow = m.params.add("syn.liif.out.w", {in_dim, 1});
        init_normal(ow, root.fork("syn.liif.out.w"), std::sqrt(2.0 / static_cast<double>(in_dim)));
        m.params.add("syn.liif.out.b", {1});
        return m;
    }
};

/// Text adapter: ReLU(W t + b), mapping the conditioning vector to the
/// attention model width.
inline ad::Var adapt_conditioning(BoundParams& p, ad::Var cond_row) {
    return ad::relu(ad::add_rowvec(ad::matmul(cond_row, p["syn.adapter.w"]), p["syn.adapter.b"]));
}

/// Cross-attention with the adapted text embedding as the Query and the voxel
/// features as Keys/Values; the attended vector is projected and broadcast-
/// added residually onto every voxel feature, so the grid shape is preserved.
inline ad::Var cross_attend(BoundParams& p, ad::Var adapted_text, ad::Var features, int heads) {
    const std::size_t d = features.val().cols();
    if (adapted_text.val().cols() != d) throw data_error("cross_attend: channel dims disagree");
    ad::Var q = ad::add_rowvec(ad::matmul(adapted_text, p["syn.xattn.wq"]), p["syn.xattn.bq"]);
    ad::Var k = ad::add_rowvec(ad::matmul(features, p["syn.xattn.wk"]), p["syn.xattn.bk"]);
    ad::Var v = ad::add_rowvec(ad::matmul(features, p["syn.xattn.wv"]), p["syn.xattn.bv"]);
    const std::size_t dh = d / static_cast<std::size_t>(heads);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<ad::Var> ctx;
    for (int h = 0; h < heads; ++h) {
        const std::size_t c0 = static_cast<std::size_t>(h) * dh;
        ad::Var qh = ad::slice_cols(q, c0, c0 + dh);
        ad::Var kh = ad::slice_cols(k, c0, c0 + dh);
        ad::Var vh = ad::slice_cols(v, c0, c0 + dh);
        ad::Var attn = ad::softmax_rows(ad::matmul_nt(qh, kh), scale, false); // [1, vox]
        ctx.push_back(ad::matmul(attn, vh));                                  // [1, dh]
    }
    ad::Var attended = ad::add_rowvec(ad::matmul(ad::concat_cols(ctx), p["syn.xattn.wo"]), p["syn.xattn.bo"]);
    return ad::add_rowvec(features, attended);
}

} // namespace promptmr

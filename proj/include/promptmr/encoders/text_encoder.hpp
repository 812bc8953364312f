// Copyright (c) 2026 promptmr authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "promptmr/encoders/attention.hpp"
#include "promptmr/prompt/bpe.hpp"

namespace promptmr {

/// Causal transformer text tower. The pooled feature is taken at the
/// end-token position (the maximum id in the sequence, which is always the
/// end marker), projected to the joint embedding width and L2-normalized.
struct TextEncoderConfig {
    int layers = 4;
    int heads = 4;
    int width = 128;
    int context_length = BpeTokenizer::kContextLength;
    int vocab_size = 49408;
    int embed_dim = 64;

    void validate() const {
        if (layers < 1 || heads < 1 || width < 1 || context_length < 2 || vocab_size < 2 || embed_dim < 1)
            throw config_error("TextEncoderConfig: all fields must be positive");
        if (width % heads != 0) throw config_error("TextEncoderConfig: width must be divisible by heads");
    }

    int mlp_dim() const { return 4 * width; }
};

inline void init_text_encoder(ParamStore& ps, const TextEncoderConfig& cfg, Rng root) {
    cfg.validate();
    const double w_std = 0.02;
    Tensor& tok = ps.add("text.tok_emb", {static_cast<std::size_t>(cfg.vocab_size), static_cast<std::size_t>(cfg.width)});
    init_normal(tok, root.fork("text.tok_emb"), w_std);
    Tensor& pos = ps.add("text.pos_emb", {static_cast<std::size_t>(cfg.context_length), static_cast<std::size_t>(cfg.width)});
    init_normal(pos, root.fork("text.pos_emb"), 0.01);
    for (int l = 0; l < cfg.layers; ++l)
        init_block_params(ps, "text.blk" + std::to_string(l), cfg.width, cfg.mlp_dim(), root, w_std);
    init_constant(ps.add("text.lnf.g", {static_cast<std::size_t>(cfg.width)}), 1.0);
    ps.add("text.lnf.b", {static_cast<std::size_t>(cfg.width)});
    Tensor& proj = ps.add("text.proj", {static_cast<std::size_t>(cfg.width), static_cast<std::size_t>(cfg.embed_dim)});
    init_normal(proj, root.fork("text.proj"), w_std);
}

/// Forward pass to a unit-norm [1, embed_dim] embedding.
inline ad::Var encode_text(ad::Graph& g, BoundParams& p, const TextEncoderConfig& cfg, const TokenSequence& seq) {
    if (seq.ids.size() != static_cast<std::size_t>(cfg.context_length))
        throw data_error("encode_text: sequence length != context_length");
    std::vector<std::size_t> ids;
    ids.reserve(seq.ids.size());
    std::size_t end_pos = 0;
    for (std::size_t i = 0; i < seq.ids.size(); ++i) {
        const int id = seq.ids[i];
        if (id < 0 || id >= cfg.vocab_size)
            throw data_error("encode_text: token id " + std::to_string(id) + " outside vocabulary");
        if (seq.ids[i] > seq.ids[end_pos]) end_pos = i;
        ids.push_back(static_cast<std::size_t>(id));
    }
    ad::Var x = ad::gather_rows(p["text.tok_emb"], ids);
    x = ad::add(x, p["text.pos_emb"]);
    for (int l = 0; l < cfg.layers; ++l)
        x = transformer_block(p, "text.blk" + std::to_string(l), x, cfg.heads, /*causal=*/true);
    x = ad::layernorm(x, p["text.lnf.g"], p["text.lnf.b"]);
    ad::Var pooled = ad::gather_rows(x, {end_pos});
    return ad::l2norm_rows(ad::matmul(pooled, p["text.proj"]));
}

/// Convenience non-graph forward for frozen weights.
inline Tensor encode_text_value(const ParamStore& ps, const TextEncoderConfig& cfg, const TokenSequence& seq) {
    ad::Graph g;
    BoundParams p(g, ps, /*trainable=*/false);
    return encode_text(g, p, cfg, seq).val();
}

inline std::size_t text_encoder_parameter_count(const TextEncoderConfig& cfg) {
    const std::size_t w = static_cast<std::size_t>(cfg.width);
    std::size_t n = static_cast<std::size_t>(cfg.vocab_size) * w;
    n += static_cast<std::size_t>(cfg.context_length) * w;
    n += static_cast<std::size_t>(cfg.layers) * block_parameter_count(cfg.width, cfg.mlp_dim());
    n += 2 * w;
    n += w * static_cast<std::size_t>(cfg.embed_dim);
    return n;
}

} // namespace promptmr

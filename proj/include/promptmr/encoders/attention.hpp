// Copyright (c) 2026 promptmr authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>

#include "promptmr/core/ops.hpp"
#include "promptmr/encoders/params.hpp"

namespace promptmr {

/// Multi-head attention over a single sequence x [T, W]; Q, K, V all derive
/// from x. `prefix` selects the parameter family: <prefix>.wq/bq/wk/bk/wv/bv/wo/bo.
inline ad::Var self_attention(BoundParams& p, const std::string& prefix, ad::Var x, int heads, bool causal) {
    ad::Var q = ad::add_rowvec(ad::matmul(x, p[prefix + ".wq"]), p[prefix + ".bq"]);
    ad::Var k = ad::add_rowvec(ad::matmul(x, p[prefix + ".wk"]), p[prefix + ".bk"]);
    ad::Var v = ad::add_rowvec(ad::matmul(x, p[prefix + ".wv"]), p[prefix + ".bv"]);
    const std::size_t width = q.val().cols();
    const std::size_t dh = width / static_cast<std::size_t>(heads);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<ad::Var> ctx;
    for (int h = 0; h < heads; ++h) {
        const std::size_t c0 = static_cast<std::size_t>(h) * dh;
        ad::Var qh = ad::slice_cols(q, c0, c0 + dh);
        ad::Var kh = ad::slice_cols(k, c0, c0 + dh);
        ad::Var vh = ad::slice_cols(v, c0, c0 + dh);
        ad::Var attn = ad::softmax_rows(ad::matmul_nt(qh, kh), scale, causal);
        ctx.push_back(ad::matmul(attn, vh));
    }
    ad::Var merged = ad::concat_cols(ctx);
    return ad::add_rowvec(ad::matmul(merged, p[prefix + ".wo"]), p[prefix + ".bo"]);
}

/// Pre-norm transformer block: x + attn(ln1(x)), then x + mlp(ln2(x)).
inline ad::Var transformer_block(BoundParams& p, const std::string& prefix, ad::Var x, int heads, bool causal) {
    ad::Var h = ad::layernorm(x, p[prefix + ".ln1.g"], p[prefix + ".ln1.b"]);
    x = ad::add(x, self_attention(p, prefix + ".attn", h, heads, causal));
    ad::Var m = ad::layernorm(x, p[prefix + ".ln2.g"], p[prefix + ".ln2.b"]);
    m = ad::add_rowvec(ad::matmul(m, p[prefix + ".mlp.w1"]), p[prefix + ".mlp.b1"]);
    m = ad::gelu(m);
    m = ad::add_rowvec(ad::matmul(m, p[prefix + ".mlp.w2"]), p[prefix + ".mlp.b2"]);
    return ad::add(x, m);
}

inline void init_attention_params(ParamStore& ps, const std::string& prefix, int width, Rng& root, double w_std) {
    for (const char* nm : {".wq", ".wk", ".wv", ".wo"}) {
        Tensor& w = ps.add(prefix + nm, {static_cast<std::size_t>(width), static_cast<std::size_t>(width)});
        init_normal(w, root.fork(prefix + nm), w_std);
    }
    for (const char* nm : {".bq", ".bk", ".bv", ".bo"})
        ps.add(prefix + nm, {static_cast<std::size_t>(width)});
}

inline void init_block_params(ParamStore& ps, const std::string& prefix, int width, int mlp_dim, Rng& root,
                              double w_std) {
    init_constant(ps.add(prefix + ".ln1.g", {static_cast<std::size_t>(width)}), 1.0);
    ps.add(prefix + ".ln1.b", {static_cast<std::size_t>(width)});
    init_attention_params(ps, prefix + ".attn", width, root, w_std);
    init_constant(ps.add(prefix + ".ln2.g", {static_cast<std::size_t>(width)}), 1.0);
    ps.add(prefix + ".ln2.b", {static_cast<std::size_t>(width)});
    Tensor& w1 = ps.add(prefix + ".mlp.w1", {static_cast<std::size_t>(width), static_cast<std::size_t>(mlp_dim)});
    init_normal(w1, root.fork(prefix + ".mlp.w1"), w_std);
    ps.add(prefix + ".mlp.b1", {static_cast<std::size_t>(mlp_dim)});
    Tensor& w2 = ps.add(prefix + ".mlp.w2", {static_cast<std::size_t>(mlp_dim), static_cast<std::size_t>(width)});
    init_normal(w2, root.fork(prefix + ".mlp.w2"), w_std);
    ps.add(prefix + ".mlp.b2", {static_cast<std::size_t>(width)});
}

inline std::size_t block_parameter_count(int width, int mlp_dim) {
    const std::size_t w = static_cast<std::size_t>(width), m = static_cast<std::size_t>(mlp_dim);
    const std::size_t attn = 4 * (w * w + w);
    const std::size_t mlp = w * m + m + m * w + w;
    const std::size_t norms = 4 * w;
    return attn + mlp + norms;
}

} // namespace promptmr

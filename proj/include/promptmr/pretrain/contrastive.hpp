// Copyright (c) 2026 promptmr authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "promptmr/core/ops.hpp"

namespace promptmr {

/// One batch of paired embeddings for the symmetric contrastive objective.
/// Producers (the encoders) emit unit-norm rows; the loss computes explicit
/// cosines, so gradients are exact for any finite embeddings.
struct ContrastiveBatch {
    Tensor image_embs; // [N, d]
    Tensor text_embs;  // [N, d]
    double tau = 0.07;

    void validate() const {
        if (image_embs.rows() < 1) throw data_error("ContrastiveBatch: N must be >= 1");
        if (!image_embs.same_shape(text_embs)) throw data_error("ContrastiveBatch: embedding shape mismatch");
        if (!(tau > 0)) throw data_error("ContrastiveBatch: tau must be positive");
        for (double v : image_embs.data)
            if (!std::isfinite(v)) throw data_error("ContrastiveBatch: non-finite image embedding");
        for (double v : text_embs.data)
            if (!std::isfinite(v)) throw data_error("ContrastiveBatch: non-finite text embedding");
    }
};

struct ContrastiveResult {
    double loss = 0;
    Tensor d_image; // dL/d(image_embs)
    Tensor d_text;  // dL/d(text_embs)
};

/// Graph form: image/text rows -> cosine matrix -> symmetric InfoNCE.
inline ad::Var contrastive_loss_graph(ad::Var image_embs, ad::Var text_embs, double tau) {
    ad::Var s = ad::matmul_nt(ad::l2norm_rows(image_embs), ad::l2norm_rows(text_embs));
    return ad::info_nce(s, tau);
}

/// Standalone form returning the loss and gradients w.r.t. both matrices.
inline ContrastiveResult contrastive_loss(const ContrastiveBatch& batch) {
    batch.validate();
    ad::Graph g;
    ad::Var v = g.leaf(batch.image_embs, true);
    ad::Var t = g.leaf(batch.text_embs, true);
    ad::Var loss = contrastive_loss_graph(v, t, batch.tau);
    g.backward(loss);
    ContrastiveResult r;
    r.loss = loss.val().data[0];
    r.d_image = g.grad(v.id);
    r.d_text = g.grad(t.id);
    return r;
}

} // namespace promptmr

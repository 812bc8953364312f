// Copyright (c) 2026 promptmr authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <vector>

#include "promptmr/pretrain/train_clip.hpp"

namespace promptmr {

struct RetrievalScore {
    int index = 0;
    double cosine = 0;
    double probability = 0; // softmax over all candidates, for display
};

/// Scores an image against candidate prompt encodings: cosine similarities
/// sorted descending, with softmax probabilities over the full candidate set.
inline std::vector<RetrievalScore> retrieve_text(const ClipModel& model, const Volume& image,
                                                 const std::vector<TokenSequence>& candidates) {
    if (candidates.empty()) throw data_error("retrieve_text: candidate list is empty");
    const Tensor img = encode_image_vit_value(model.params, model.vit_cfg, image);
    std::vector<RetrievalScore> scores(candidates.size());
    double mx = -1e300;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const Tensor txt = encode_text_value(model.params, model.text_cfg, candidates[i]);
        double dot = 0;
        for (std::size_t j = 0; j < img.size(); ++j) dot += img.data[j] * txt.data[j];
        scores[i].index = static_cast<int>(i);
        scores[i].cosine = dot;
        mx = std::max(mx, dot);
    }
    double z = 0;
    for (auto& s : scores) z += std::exp(s.cosine - mx);
    for (auto& s : scores) s.probability = std::exp(s.cosine - mx) / z;
    std::stable_sort(scores.begin(), scores.end(), [](const RetrievalScore& a, const RetrievalScore& b) {
        return a.cosine > b.cosine;
    });
    return scores;
}

inline std::vector<RetrievalScore> retrieve_text(const ClipModel& model, const Volume& image,
                                                 const std::vector<TokenSequence>& candidates, std::size_t k) {
    std::vector<RetrievalScore> all = retrieve_text(model, image, candidates);
    if (k < all.size()) all.resize(k);
    return all;
}

/// Image-to-modality retrieval against the seven fixed modality-name prompts.
inline Modality retrieve_modality(const ClipModel& model, const Volume& image, const BpeTokenizer& tok) {
    std::vector<TokenSequence> prompts;
    for (Modality m : kAllModalities)
        prompts.push_back(tokenize(modality_prompt(m), tok, model.text_cfg.context_length));
    const std::vector<RetrievalScore> ranked = retrieve_text(model, image, prompts);
    return kAllModalities[static_cast<std::size_t>(ranked.front().index)];
}

} // namespace promptmr

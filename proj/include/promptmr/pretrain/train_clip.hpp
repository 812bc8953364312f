// Copyright (c) 2026 promptmr authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "promptmr/encoders/adam.hpp"
#include "promptmr/encoders/text_encoder.hpp"
#include "promptmr/encoders/vit3d.hpp"
#include "promptmr/pretrain/contrastive.hpp"

namespace promptmr {

struct ClipPair {
    Volume volume;
    TokenSequence tokens;
};

struct ClipTrainConfig {
    int epochs = 100;
    int warmup_epochs = 20;
    double peak_lr = 5e-5; // the recipe's warmup peak, read as 5e-5
    int batch_size = 27;
    double adam_beta1 = 0.5;
    double adam_beta2 = 0.999;
    double tau = 0.07;
    std::uint64_t seed = 0;

    void validate() const {
        if (epochs < 1) throw config_error("ClipTrainConfig: epochs must be >= 1");
        if (warmup_epochs < 0 || warmup_epochs >= epochs)
            throw config_error("ClipTrainConfig: warmup_epochs must be < epochs");
        if (batch_size < 1) throw config_error("ClipTrainConfig: batch_size must be >= 1");
        if (!(peak_lr > 0)) throw config_error("ClipTrainConfig: peak_lr must be positive");
        if (!(tau > 0)) throw config_error("ClipTrainConfig: tau must be positive");
    }
};

/// Both stage-1 towers and their configs in one parameter store.
struct ClipModel {
    TextEncoderConfig text_cfg;
    ViTConfig vit_cfg;
    ParamStore params;

    static ClipModel init(const TextEncoderConfig& tc, const ViTConfig& vc, std::uint64_t seed) {
        if (tc.embed_dim != vc.embed_dim)
            throw config_error("ClipModel: text and image towers must share embed_dim");
        ClipModel m;
        m.text_cfg = tc;
        m.vit_cfg = vc;
        Rng root(seed);
        init_text_encoder(m.params, tc, root.fork("init-text"));
        init_vit3d(m.params, vc, root.fork("init-vit"));
        return m;
    }
};

struct EpochLog {
    int epoch = 0; // 0-based
    double mean_loss = 0;
    double lr = 0;
};

/// Stage-1 training: seeded shuffling, whole batches only, linear warmup then
/// linear decay, Adam(beta1, beta2). Appends one log row per epoch. The
/// `start_epoch` offset keeps resumed runs on the original schedule.
inline std::vector<EpochLog> train_clip(ClipModel& model, const std::vector<ClipPair>& dataset,
                                        const ClipTrainConfig& cfg, AdamState& opt, int start_epoch = 0) {
    cfg.validate();
    model.text_cfg.validate();
    model.vit_cfg.validate();
    if (dataset.size() < static_cast<std::size_t>(cfg.batch_size))
        throw data_error("train_clip: dataset smaller than one batch (" + std::to_string(dataset.size()) + " < " +
                         std::to_string(cfg.batch_size) + ")");

    const std::size_t batches = dataset.size() / static_cast<std::size_t>(cfg.batch_size);
    const AdamConfig adam{cfg.adam_beta1, cfg.adam_beta2, 1e-8};
    std::vector<EpochLog> log;

    for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
        const double lr = warmup_linear_lr(epoch, cfg.epochs, cfg.warmup_epochs, cfg.peak_lr);
        std::vector<std::size_t> order(dataset.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng shuffle_rng = Rng(cfg.seed).fork("clip-epoch-" + std::to_string(epoch));
        shuffle_rng.shuffle(order);

        double loss_sum = 0;
        for (std::size_t b = 0; b < batches; ++b) {
            ad::Graph g;
            BoundParams p(g, model.params, /*trainable=*/true);
            std::vector<ad::Var> v_rows, t_rows;
            for (int i = 0; i < cfg.batch_size; ++i) {
                const ClipPair& pair = dataset[order[b * static_cast<std::size_t>(cfg.batch_size) +
                                                     static_cast<std::size_t>(i)]];
                v_rows.push_back(encode_image_vit(g, p, model.vit_cfg, pair.volume));
                t_rows.push_back(encode_text(g, p, model.text_cfg, pair.tokens));
            }
            ad::Var v = ad::concat_rows(v_rows);
            ad::Var t = ad::concat_rows(t_rows);
            // rows are already unit-norm, so the product is the cosine matrix
            ad::Var loss = ad::info_nce(ad::matmul_nt(v, t), cfg.tau);
            g.backward(loss);
            loss_sum += loss.val().data[0];

            std::map<std::string, Tensor> grads;
            p.accumulate_grads(grads);
            adam_step(model.params, grads, opt, lr, adam);
        }
        log.push_back(EpochLog{epoch, loss_sum / static_cast<double>(batches), lr});
    }
    return log;
}

} // namespace promptmr

// Copyright (c) 2026 promptmr authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "promptmr/pretrain/train_clip.hpp" // EpochLog
#include "promptmr/synth/synthesize.hpp"

namespace promptmr {

/// One aligned training example: an input contrast and the target contrast
/// over the same physical extent (target dims >= input dims per axis; the
/// ratio is the pair's scale).
struct SynthPair {
    Volume input;
    Volume target;
    ScanMetadata target_meta;
    int onehot_label = 0;
    Tensor cond; // [1, cond_dim]; filled by prepare_conditioning
};

inline void prepare_conditioning(std::vector<SynthPair>& pairs, const SynthesisModel& model,
                                 const BpeTokenizer& tok) {
    for (SynthPair& p : pairs) p.cond = conditioning_row(model, p.target_meta, p.onehot_label, tok);
}

struct SynthTrainConfig {
    int epochs = 300;
    int batch_size = 16;
    double lr = 1e-4;
    int lr_constant_epochs = 100;
    int lr_step = 50;
    double lr_gamma = 0.5; // decay factor per milestone
    double adam_beta1 = 0.5;
    double adam_beta2 = 0.999;
    int queries_per_patch = 256;
    int steps_per_epoch = 0; // 0 -> ceil(pairs / batch_size)
    std::uint64_t seed = 0;

    void validate() const {
        if (epochs < 1 || batch_size < 1 || queries_per_patch < 1 || steps_per_epoch < 0)
            throw config_error("SynthTrainConfig: counts must be positive");
        if (!(lr > 0) || !(lr_gamma > 0)) throw config_error("SynthTrainConfig: lr and lr_gamma must be positive");
        if (lr_constant_epochs < 0 || lr_step < 1) throw config_error("SynthTrainConfig: bad schedule");
    }
};

namespace synth_detail {

/// Target-lattice index range whose voxel centers fall inside the input patch
/// [origin, origin+p) on one axis.
inline void target_range(std::size_t origin, std::size_t p, std::size_t n_in, std::size_t n_out,
                         std::size_t& jlo, std::size_t& jhi) {
    const double r = static_cast<double>(n_out) / static_cast<double>(n_in);
    jlo = static_cast<std::size_t>(std::max(0.0, std::ceil(static_cast<double>(origin) * r - 0.5 - 1e-9)));
    jhi = static_cast<std::size_t>(
        std::min(static_cast<double>(n_out) - 1.0,
                 std::floor((static_cast<double>(origin) + static_cast<double>(p)) * r - 0.5 + 1e-9)));
}

} // namespace synth_detail

/// Stage-2 training: per step, sample patches and target-lattice query points,
/// minimize the mean absolute error of decoded intensities. The text tower is
/// outside the trainable store, so its weights are untouched by construction.
inline std::vector<EpochLog> train_synthesis(SynthesisModel& model, const std::vector<SynthPair>& pairs,
                                             const SynthTrainConfig& cfg, AdamState& opt, int start_epoch = 0) {
    cfg.validate();
    model.cfg.validate();
    if (pairs.empty()) throw data_error("train_synthesis: no training pairs");
    const std::size_t p = static_cast<std::size_t>(model.cfg.cnn.patch_edge);
    for (const SynthPair& pr : pairs) {
        for (int a = 0; a < 3; ++a) {
            const std::size_t k = static_cast<std::size_t>(a);
            if (pr.target.dims[k] < pr.input.dims[k])
                throw data_error("train_synthesis: misaligned pair shapes (target smaller than input)");
            if (pr.input.dims[k] < p) throw data_error("train_synthesis: patch larger than input volume");
        }
        if (pr.cond.size() != static_cast<std::size_t>(model.conditioning_dim()))
            throw data_error("train_synthesis: conditioning not prepared (call prepare_conditioning)");
    }

    const AdamConfig adam{cfg.adam_beta1, cfg.adam_beta2, 1e-8};
    const int steps = cfg.steps_per_epoch > 0
                          ? cfg.steps_per_epoch
                          : static_cast<int>((pairs.size() + static_cast<std::size_t>(cfg.batch_size) - 1) /
                                             static_cast<std::size_t>(cfg.batch_size));
    const ad::Dims3 pdims{p, p, p};
    std::vector<EpochLog> log;

    for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
        const double lr = multistep_lr(epoch, cfg.lr, cfg.lr_constant_epochs, cfg.lr_step, cfg.lr_gamma);
        Rng rng = Rng(cfg.seed).fork("synth-epoch-" + std::to_string(epoch));
        double loss_sum = 0;
        for (int step = 0; step < steps; ++step) {
            std::map<std::string, Tensor> grads;
            double batch_loss = 0;
            for (int b = 0; b < cfg.batch_size; ++b) {
                const SynthPair& pair = pairs[rng.uniform_int(pairs.size())];
                std::size_t origin[3];
                std::size_t jlo[3], jhi[3];
                for (int a = 0; a < 3; ++a) {
                    const std::size_t k = static_cast<std::size_t>(a);
                    origin[a] = static_cast<std::size_t>(rng.uniform_int(pair.input.dims[k] - p + 1));
                    synth_detail::target_range(origin[a], p, pair.input.dims[k], pair.target.dims[k], jlo[a], jhi[a]);
                }

                Tensor patch = Tensor::zeros({p * p * p, 1});
                for (std::size_t z = 0; z < p; ++z)
                    for (std::size_t y = 0; y < p; ++y)
                        for (std::size_t x = 0; x < p; ++x)
                            patch.data[x + p * (y + p * z)] =
                                pair.input.at(origin[0] + x, origin[1] + y, origin[2] + z);

                CoordinateQuery query;
                for (int a = 0; a < 3; ++a)
                    query.cell[static_cast<std::size_t>(a)] =
                        2.0 * static_cast<double>(pair.input.dims[static_cast<std::size_t>(a)]) /
                        (static_cast<double>(pair.target.dims[static_cast<std::size_t>(a)]) * static_cast<double>(p));
                Tensor target = Tensor::zeros({static_cast<std::size_t>(cfg.queries_per_patch), 1});
                for (int qi = 0; qi < cfg.queries_per_patch; ++qi) {
                    std::size_t j[3];
                    std::array<double, 3> c{};
                    for (int a = 0; a < 3; ++a) {
                        const std::size_t k = static_cast<std::size_t>(a);
                        j[a] = jlo[a] + static_cast<std::size_t>(rng.uniform_int(jhi[a] - jlo[a] + 1));
                        const double u = (static_cast<double>(j[a]) + 0.5) *
                                             static_cast<double>(pair.input.dims[k]) /
                                             static_cast<double>(pair.target.dims[k]) -
                                         0.5;
                        const double t = u - static_cast<double>(origin[a]);
                        c[k] = (t + 0.5) * 2.0 / static_cast<double>(p) - 1.0;
                    }
                    query.coords.push_back(c);
                    target.data[static_cast<std::size_t>(qi)] = pair.target.at(j[0], j[1], j[2]);
                }

                ad::Graph g;
                BoundParams bp(g, model.params, /*trainable=*/true);
                ad::Var feats = encode_image_cnn(g, bp, model.cfg.cnn, g.leaf(std::move(patch), false), pdims);
                ad::Var att = cross_attend(bp, adapt_conditioning(bp, g.leaf(pair.cond, false)), feats,
                                           model.cfg.xattn_heads);
                ad::Var pred = liif_decode(bp, model.cfg.liif, att, pdims, query);
                ad::Var loss = ad::mean_abs_error(pred, std::move(target));
                g.backward(loss);
                batch_loss += loss.val().data[0];
                bp.accumulate_grads(grads);
            }
            for (auto& [name, t] : grads)
                for (double& v : t.data) v /= static_cast<double>(cfg.batch_size);
            adam_step(model.params, grads, opt, lr, adam);
            loss_sum += batch_loss / static_cast<double>(cfg.batch_size);
        }
        log.push_back(EpochLog{epoch, loss_sum / static_cast<double>(steps), lr});
    }
    return log;
}

} // namespace promptmr

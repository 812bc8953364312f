// Copyright (c) 2026 promptmr authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <map>

#include "promptmr/encoders/params.hpp"

namespace promptmr {

struct AdamConfig {
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    ParamStore m, v;
    long step = 0;

    static AdamState init(const ParamStore& params) {
        AdamState s;
        for (const std::string& name : params.order) {
            s.m.add(name, params.at(name).shape);
            s.v.add(name, params.at(name).shape);
        }
        return s;
    }
};

/// Standard bias-corrected Adam over every parameter in the store. Parameters
/// with no gradient this step are treated as zero-gradient (their moments
/// still decay).
inline void adam_step(ParamStore& params, const std::map<std::string, Tensor>& grads, AdamState& st,
                      double lr, const AdamConfig& cfg = {}) {
    ++st.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
    for (const std::string& name : params.order) {
        Tensor& p = params.at(name);
        Tensor& m = st.m.at(name);
        Tensor& v = st.v.at(name);
        auto git = grads.find(name);
        const Tensor* g = git == grads.end() ? nullptr : &git->second;
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double gi = g ? g->data[i] : 0.0;
            m.data[i] = cfg.beta1 * m.data[i] + (1.0 - cfg.beta1) * gi;
            v.data[i] = cfg.beta2 * v.data[i] + (1.0 - cfg.beta2) * gi * gi;
            const double mhat = m.data[i] / bc1;
            const double vhat = v.data[i] / bc2;
            p.data[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

/// Linear warmup to `peak` over the first `warmup` epochs, then linear decay
/// reaching zero just past the final epoch. Epochs are 0-based.
inline double warmup_linear_lr(int epoch, int epochs, int warmup, double peak) {
    if (epoch < warmup) return peak * static_cast<double>(epoch + 1) / static_cast<double>(warmup);
    return peak * static_cast<double>(epochs - epoch) / static_cast<double>(epochs - warmup);
}

/// Constant `base` for the first `constant_epochs`, then multiplied by gamma
/// at every `step`-epoch milestone.
inline double multistep_lr(int epoch, double base, int constant_epochs, int step, double gamma) {
    if (epoch < constant_epochs) return base;
    const int milestones = 1 + (epoch - constant_epochs) / step;
    return base * std::pow(gamma, static_cast<double>(milestones));
}

} // namespace promptmr

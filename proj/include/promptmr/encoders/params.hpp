// Copyright (c) 2026 promptmr authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "promptmr/core/error.hpp"
#include "promptmr/core/graph.hpp"
#include "promptmr/core/rng.hpp"

namespace promptmr {

/// Named weight tensors in a stable insertion order. Initialization derives
/// each tensor's RNG stream from (seed, name), so values do not depend on
/// registration order.
struct ParamStore {
    std::vector<std::string> order;
    std::unordered_map<std::string, Tensor> tensors;

    Tensor& add(const std::string& name, std::vector<std::size_t> shape) {
        auto [it, inserted] = tensors.emplace(name, Tensor::zeros(std::move(shape)));
        if (!inserted) throw data_error("ParamStore: duplicate parameter " + name);
        order.push_back(name);
        return it->second;
    }

    bool has(const std::string& name) const { return tensors.count(name) != 0; }

    Tensor& at(const std::string& name) {
        auto it = tensors.find(name);
        if (it == tensors.end()) throw data_error("ParamStore: unknown parameter " + name);
        return it->second;
    }
    const Tensor& at(const std::string& name) const {
        auto it = tensors.find(name);
        if (it == tensors.end()) throw data_error("ParamStore: unknown parameter " + name);
        return it->second;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& [k, t] : tensors) n += t.size();
        return n;
    }
};

inline void init_normal(Tensor& t, Rng rng, double stddev) {
    for (double& v : t.data) v = rng.normal(0.0, stddev);
}
inline void init_constant(Tensor& t, double v) { std::fill(t.data.begin(), t.data.end(), v); }

/// Lazily binds store tensors as graph leaves; each tensor is bound at most
/// once per graph so gradients accumulate in a single buffer.
class BoundParams {
public:
    BoundParams(ad::Graph& g, const ParamStore& ps, bool trainable)
        : g_(&g), ps_(&ps), trainable_(trainable) {}

    ad::Var operator[](const std::string& name) {
        auto it = bound_.find(name);
        if (it != bound_.end()) return it->second;
        ad::Var v = g_->leaf(ps_->at(name), trainable_);
        bound_.emplace(name, v);
        return v;
    }

    bool trainable() const { return trainable_; }

    /// Adds each bound parameter's gradient into `out[name]` (created at zero).
    void accumulate_grads(std::map<std::string, Tensor>& out) const {
        if (!trainable_) return;
        for (const auto& [name, var] : bound_) {
            Tensor& g = var.g->grad(var.id);
            auto it = out.find(name);
            if (it == out.end()) it = out.emplace(name, Tensor::zeros(g.shape)).first;
            for (std::size_t i = 0; i < g.size(); ++i) it->second.data[i] += g.data[i];
        }
    }

private:
    ad::Graph* g_;
    const ParamStore* ps_;
    bool trainable_;
    std::unordered_map<std::string, ad::Var> bound_;
};

} // namespace promptmr

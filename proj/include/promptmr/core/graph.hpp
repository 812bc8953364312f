// Copyright (c) 2026 promptmr authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <deque>
#include <functional>
#include <stdexcept>

#include "promptmr/core/tensor.hpp"

namespace promptmr::ad {

class Graph;

/// Handle to a node in a Graph. Cheap to copy; valid for the graph's lifetime.
struct Var {
    Graph* g = nullptr;
    int id = -1;

    const Tensor& val() const;
    bool valid() const { return g != nullptr && id >= 0; }
};

/// Define-by-run reverse-mode tape. Nodes are created in topological order by
/// the forward pass; backward() walks them in reverse, each node accumulating
/// into its parents' grad buffers through its closure.
class Graph {
public:
    int add(Tensor value, bool needs_grad, std::function<void(Graph&)> backward = nullptr) {
        nodes_.push_back(NodeRec{std::move(value), Tensor{}, needs_grad, std::move(backward)});
        return static_cast<int>(nodes_.size()) - 1;
    }

    /// Installs the backward closure after the node exists, so the closure can
    /// capture its own node id.
    void set_backward(int id, std::function<void(Graph&)> backward) {
        nodes_[static_cast<std::size_t>(id)].backward = std::move(backward);
    }

    Var var(int id) { return Var{this, id}; }

    Var leaf(Tensor value, bool needs_grad) { return var(add(std::move(value), needs_grad)); }

    const Tensor& val(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    Tensor& val(int id) { return nodes_[static_cast<std::size_t>(id)].value; }

    bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }

    /// Gradient buffer, zero-allocated on first access.
    Tensor& grad(int id) {
        NodeRec& n = nodes_[static_cast<std::size_t>(id)];
        if (n.grad.shape.empty() && !n.value.shape.empty()) n.grad = Tensor::zeros(n.value.shape);
        return n.grad;
    }

    /// Runs reverse accumulation from a scalar loss node (seed gradient 1).
    void backward(Var loss) {
        if (loss.g != this) throw std::logic_error("Graph::backward: foreign node");
        if (val(loss.id).size() != 1) throw std::logic_error("Graph::backward: loss must be scalar");
        grad(loss.id).data[0] = 1.0;
        run_backward(loss.id);
    }

    /// Reverse accumulation from an arbitrary node with an externally supplied
    /// upstream gradient (used to stitch independently built graphs together).
    void backward_seed(Var node, const Tensor& seed) {
        if (node.g != this) throw std::logic_error("Graph::backward_seed: foreign node");
        Tensor& gbuf = grad(node.id);
        if (!gbuf.same_shape(seed)) throw std::logic_error("Graph::backward_seed: seed shape mismatch");
        for (std::size_t i = 0; i < seed.size(); ++i) gbuf.data[i] += seed.data[i];
        run_backward(node.id);
    }

    std::size_t node_count() const { return nodes_.size(); }

private:
    struct NodeRec {
        Tensor value;
        Tensor grad;
        bool needs_grad;
        std::function<void(Graph&)> backward;
    };

    void run_backward(int from) {
        for (int i = from; i >= 0; --i) {
            NodeRec& n = nodes_[static_cast<std::size_t>(i)];
            if (!n.needs_grad || !n.backward) continue;
            if (n.grad.shape.empty()) continue; // no upstream gradient reached this node
            n.backward(*this);
        }
    }

    std::deque<NodeRec> nodes_;
};

inline const Tensor& Var::val() const { return g->val(id); }

} // namespace promptmr::ad

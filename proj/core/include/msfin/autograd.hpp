// Copyright (c) 2026 MSFIN contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "msfin/common.hpp"
#include "msfin/tensor.hpp"

namespace msfin {

/// Reverse-mode tape over a dynamically recorded graph.
///
/// Construction activates the tape for the current thread (RAII); operators
/// in ops.hpp record themselves onto the active tape whenever any input
/// requires gradient. Leaves (parameters) are assigned nodes lazily on first
/// use, so a weight tensor applied twice — the RRCAB recurrence — maps to one
/// node and its gradient accumulates across both uses.
///
/// Single-writer: one tape records and backpropagates on one logical thread.
template <typename S>
class Tape {
public:
    Tape() : epoch_(next_epoch()++) {
        prev_ = active_slot();
        active_slot() = this;
    }
    ~Tape() { active_slot() = prev_; }
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* active() { return active_slot(); }

    std::uint64_t epoch() const { return epoch_; }

    /// Node of t on this tape; assigns a leaf node first if t requires grad
    /// and has none yet. Returns -1 for non-differentiable inputs.
    std::int64_t leaf_node(const Tensor<S>& t) {
        if (!t.requires_grad()) return -1;
        std::int64_t node = t.tape_node(epoch_);
        if (node < 0) {
            node = new_node(t.shape());
            t.set_tape_node(epoch_, node);
        }
        return node;
    }

    /// Registers op output: marks it differentiable and assigns its node.
    std::int64_t result_node(Tensor<S>& out) {
        out.set_requires_grad(true);
        const std::int64_t node = new_node(out.shape());
        out.set_tape_node(epoch_, node);
        return node;
    }

    /// Appends a backward rule. The rule reads grad(out_node) and calls
    /// accumulate() for each differentiable input.
    void record(std::int64_t out_node, std::function<void(Tape&)> backward) {
        steps_.push_back({out_node, std::move(backward)});
    }

    bool has_grad(std::int64_t node) const {
        return node >= 0 && grads_[node].defined();
    }

    const Tensor<S>& grad_at(std::int64_t node) const { return grads_[node]; }

    void accumulate(std::int64_t node, const Tensor<S>& g) {
        if (node < 0) return;
        check(g.shape() == shapes_[node],
              "gradient shape " + g.shape().str() + " != node shape " +
                  shapes_[node].str());
        if (!grads_[node].defined()) {
            grads_[node] = g.clone();
            grads_[node].set_requires_grad(false);
            return;
        }
        S* dst = grads_[node].data();
        const S* src = g.data();
        const std::size_t n = g.numel();
        for (std::size_t i = 0; i < n; ++i) dst[i] += src[i];
    }

    /// Reverse sweep from a scalar loss. Each recorded operation is visited
    /// exactly once, in reverse recording order. Calling again without a new
    /// tape accumulates on top of the previous gradients.
    void backward(const Tensor<S>& loss) {
        check(loss.shape() == Shape4{1, 1, 1, 1},
              "backward: loss must be scalar-shaped (1,1,1,1), got " +
                  loss.shape().str());
        const std::int64_t seed = loss.tape_node(epoch_);
        check(seed >= 0, "backward: loss is not recorded on the active tape");
        accumulate(seed, Tensor<S>::scalar(S(1)));
        for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) {
            if (has_grad(it->out_node)) it->backward(*this);
        }
    }

    /// Gradient of t if it participated in the last backward, else nullptr.
    const Tensor<S>* grad(const Tensor<S>& t) const {
        const std::int64_t node = t.tape_node(epoch_);
        if (node < 0 || !grads_[node].defined()) return nullptr;
        return &grads_[node];
    }

    std::size_t op_count() const { return steps_.size(); }

private:
    struct Step {
        std::int64_t out_node;
        std::function<void(Tape&)> backward;
    };

    std::int64_t new_node(Shape4 shape) {
        shapes_.push_back(shape);
        grads_.emplace_back();
        return static_cast<std::int64_t>(shapes_.size()) - 1;
    }

    static Tape*& active_slot() {
        thread_local Tape* slot = nullptr;
        return slot;
    }
    static std::uint64_t& next_epoch() {
        // 0 is reserved as "never taped"
        thread_local std::uint64_t e = 1;
        return e;
    }

    std::uint64_t epoch_;
    Tape* prev_ = nullptr;
    std::vector<Step> steps_;
    std::vector<Shape4> shapes_;
    std::vector<Tensor<S>> grads_;
};

}  // namespace msfin

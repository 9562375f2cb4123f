// Copyright (c) 2026 MSFIN contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <type_traits>
#include <vector>

#include "msfin/common.hpp"
#include "msfin/rng.hpp"

namespace msfin {

/// Dense 4-D tensor over float (training/inference) or double (gradient
/// checking). Copies are shallow: handles share one storage block, so a
/// parameter tensor used at several graph sites is a single autograd leaf.
/// Layout is fixed (N,C,H,W) contiguous, index = ((n*C + c)*H + y)*W + x.
template <typename S>
class Tensor {
    static_assert(std::is_same_v<S, float> || std::is_same_v<S, double>,
                  "element type is 32- or 64-bit floating point");

    struct Storage {
        Shape4 shape;
        std::vector<S> data;
        bool requires_grad = false;
        // Tape bookkeeping: node id valid only while epoch matches the
        // active tape's epoch. Lives here so aliasing handles agree.
        std::int64_t node = -1;
        std::uint64_t epoch = 0;
    };

public:
    Tensor() = default;

    explicit Tensor(Shape4 shape) : s_(std::make_shared<Storage>()) {
        s_->shape = shape;
        s_->data.assign(shape.numel(), S(0));
    }
    Tensor(int n, int c, int h, int w) : Tensor(Shape4{n, c, h, w}) {}

    static Tensor zeros(Shape4 shape) { return Tensor(shape); }
    static Tensor full(Shape4 shape, S value) {
        Tensor t(shape);
        for (auto& v : t.s_->data) v = value;
        return t;
    }
    static Tensor scalar(S value) { return full({1, 1, 1, 1}, value); }
    static Tensor uniform(Shape4 shape, Rng& rng, S lo = S(0), S hi = S(1)) {
        Tensor t(shape);
        for (auto& v : t.s_->data) v = static_cast<S>(rng.uniform(lo, hi));
        return t;
    }
    static Tensor gaussian(Shape4 shape, Rng& rng, S stddev) {
        Tensor t(shape);
        for (auto& v : t.s_->data) v = static_cast<S>(rng.gaussian() * stddev);
        return t;
    }

    bool defined() const { return static_cast<bool>(s_); }
    const Shape4& shape() const { return s_->shape; }
    int n() const { return s_->shape.n; }
    int c() const { return s_->shape.c; }
    int h() const { return s_->shape.h; }
    int w() const { return s_->shape.w; }
    std::size_t numel() const { return s_ ? s_->shape.numel() : 0; }

    S* data() { return s_->data.data(); }
    const S* data() const { return s_->data.data(); }

    S& at(int n, int c, int y, int x) {
        return s_->data[idx(n, c, y, x)];
    }
    S at(int n, int c, int y, int x) const {
        return s_->data[idx(n, c, y, x)];
    }

    bool requires_grad() const { return s_ && s_->requires_grad; }
    Tensor& set_requires_grad(bool v) {
        s_->requires_grad = v;
        return *this;
    }

    /// Deep copy with fresh storage (drops any tape association).
    Tensor clone() const {
        Tensor t(s_->shape);
        t.s_->data = s_->data;
        t.s_->requires_grad = s_->requires_grad;
        return t;
    }

    /// Same storage viewed with a new shape of equal element count.
    Tensor reshaped(Shape4 shape) const {
        check(shape.numel() == numel(),
              "reshape element count mismatch " + s_->shape.str() + " -> " +
                  shape.str());
        Tensor t = *this;
        t.s_ = std::make_shared<Storage>(*s_);
        t.s_->shape = shape;
        return t;
    }

    void fill(S value) {
        for (auto& v : s_->data) v = value;
    }

    /// Storage identity; two handles with equal ids alias the same buffer.
    const void* storage_id() const { return s_.get(); }

    // Tape hooks (see autograd.hpp).
    std::int64_t tape_node(std::uint64_t epoch) const {
        return (s_ && s_->epoch == epoch) ? s_->node : -1;
    }
    void set_tape_node(std::uint64_t epoch, std::int64_t node) const {
        s_->epoch = epoch;
        s_->node = node;
    }

private:
    std::size_t idx(int n, int c, int y, int x) const {
        const auto& s = s_->shape;
        return ((static_cast<std::size_t>(n) * s.c + c) * s.h + y) * s.w + x;
    }

    std::shared_ptr<Storage> s_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

template <typename S>
void check_valid_operand(const Tensor<S>& t, const char* what) {
    check(t.defined(), std::string(what) + ": undefined tensor");
    const auto& s = t.shape();
    check(s.n >= 1 && s.c >= 1 && s.h >= 1 && s.w >= 1,
          std::string(what) + ": all extents must be >= 1, got " + s.str());
}

}  // namespace msfin

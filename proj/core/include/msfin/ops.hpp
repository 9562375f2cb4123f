// Copyright (c) 2026 MSFIN contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "msfin/autograd.hpp"
#include "msfin/conv.hpp"
#include "msfin/tensor.hpp"

namespace msfin {

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
    check_valid_operand(a, "add");
    check_valid_operand(b, "add");
    check(a.shape() == b.shape(),
          "add: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
    Tensor<S> out(a.shape());
    const S* pa = a.data();
    const S* pb = b.data();
    S* po = out.data();
    for (std::size_t i = 0, e = a.numel(); i < e; ++i) po[i] = pa[i] + pb[i];

    if (Tape<S>* tape = Tape<S>::active();
        tape && (a.requires_grad() || b.requires_grad())) {
        const auto na = tape->leaf_node(a);
        const auto nb = tape->leaf_node(b);
        const auto no = tape->result_node(out);
        tape->record(no, [=](Tape<S>& t) {
            const Tensor<S>& go = t.grad_at(no);
            t.accumulate(na, go);
            t.accumulate(nb, go);
        });
    }
    return out;
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
    check_valid_operand(a, "sub");
    check_valid_operand(b, "sub");
    check(a.shape() == b.shape(),
          "sub: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
    Tensor<S> out(a.shape());
    const S* pa = a.data();
    const S* pb = b.data();
    S* po = out.data();
    for (std::size_t i = 0, e = a.numel(); i < e; ++i) po[i] = pa[i] - pb[i];

    if (Tape<S>* tape = Tape<S>::active();
        tape && (a.requires_grad() || b.requires_grad())) {
        const auto na = tape->leaf_node(a);
        const auto nb = tape->leaf_node(b);
        const auto no = tape->result_node(out);
        tape->record(no, [=](Tape<S>& t) {
            const Tensor<S>& go = t.grad_at(no);
            t.accumulate(na, go);
            if (nb >= 0) {
                Tensor<S> neg(go.shape());
                const S* g = go.data();
                S* p = neg.data();
                for (std::size_t i = 0, e = go.numel(); i < e; ++i) p[i] = -g[i];
                t.accumulate(nb, neg);
            }
        });
    }
    return out;
}

namespace detail {

// b broadcast as (N,C,1,1) across a's spatial extent
template <typename S>
Tensor<S> mul_bcast_fwd(const Tensor<S>& a, const Tensor<S>& b) {
    Tensor<S> out(a.shape());
    const int N = a.n(), C = a.c();
    const std::size_t plane = static_cast<std::size_t>(a.h()) * a.w();
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const S f = b.data()[n * C + c];
            const S* pa = a.data() + (static_cast<std::size_t>(n) * C + c) * plane;
            S* po = out.data() + (static_cast<std::size_t>(n) * C + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) po[i] = pa[i] * f;
        }
    }
    return out;
}

// spatial sum, (N,C,H,W) -> (N,C,1,1)
template <typename S>
Tensor<S> reduce_spatial(const Tensor<S>& t) {
    Tensor<S> out(t.n(), t.c(), 1, 1);
    const int N = t.n(), C = t.c();
    const std::size_t plane = static_cast<std::size_t>(t.h()) * t.w();
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const S* p = t.data() + (static_cast<std::size_t>(n) * C + c) * plane;
            S acc = 0;
            for (std::size_t i = 0; i < plane; ++i) acc += p[i];
            out.data()[n * C + c] = acc;
        }
    }
    return out;
}

}  // namespace detail

/// Elementwise product. Also accepts one (N,C,1,1) operand broadcast across
/// the other's spatial extent — the channel-attention case.
template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
    check_valid_operand(a, "mul");
    check_valid_operand(b, "mul");
    const bool same = a.shape() == b.shape();
    const bool b_bcast = !same && b.h() == 1 && b.w() == 1 && b.n() == a.n() && b.c() == a.c();
    const bool a_bcast = !same && a.h() == 1 && a.w() == 1 && a.n() == b.n() && a.c() == b.c();
    check(same || b_bcast || a_bcast,
          "mul: shape mismatch " + a.shape().str() + " vs " + b.shape().str() +
              " (only (N,C,1,1) broadcast is supported)");
    if (a_bcast) return mul(b, a);

    Tensor<S> out(a.shape());
    if (same) {
        const S* pa = a.data();
        const S* pb = b.data();
        S* po = out.data();
        for (std::size_t i = 0, e = a.numel(); i < e; ++i) po[i] = pa[i] * pb[i];
    } else {
        out = detail::mul_bcast_fwd(a, b);
    }

    if (Tape<S>* tape = Tape<S>::active();
        tape && (a.requires_grad() || b.requires_grad())) {
        const auto na = tape->leaf_node(a);
        const auto nb = tape->leaf_node(b);
        const auto no = tape->result_node(out);
        tape->record(no, [=](Tape<S>& t) {
            const Tensor<S>& go = t.grad_at(no);
            if (same) {
                if (na >= 0) {
                    Tensor<S> ga(go.shape());
                    for (std::size_t i = 0, e = go.numel(); i < e; ++i)
                        ga.data()[i] = go.data()[i] * b.data()[i];
                    t.accumulate(na, ga);
                }
                if (nb >= 0) {
                    Tensor<S> gb(go.shape());
                    for (std::size_t i = 0, e = go.numel(); i < e; ++i)
                        gb.data()[i] = go.data()[i] * a.data()[i];
                    t.accumulate(nb, gb);
                }
            } else {
                if (na >= 0) t.accumulate(na, detail::mul_bcast_fwd(go, b));
                if (nb >= 0) {
                    // grad of the broadcast factor: spatial sum of go * a
                    Tensor<S> prod(go.shape());
                    for (std::size_t i = 0, e = go.numel(); i < e; ++i)
                        prod.data()[i] = go.data()[i] * a.data()[i];
                    t.accumulate(nb, detail::reduce_spatial(prod));
                }
            }
        });
    }
    return out;
}

/// Multiplication by a plain (non-differentiated) scalar constant.
template <typename S>
Tensor<S> scale(const Tensor<S>& a, S factor) {
    check_valid_operand(a, "scale");
    Tensor<S> out(a.shape());
    const S* pa = a.data();
    S* po = out.data();
    for (std::size_t i = 0, e = a.numel(); i < e; ++i) po[i] = pa[i] * factor;

    if (Tape<S>* tape = Tape<S>::active(); tape && a.requires_grad()) {
        const auto na = tape->leaf_node(a);
        const auto no = tape->result_node(out);
        tape->record(no, [=](Tape<S>& t) {
            const Tensor<S>& go = t.grad_at(no);
            Tensor<S> ga(go.shape());
            for (std::size_t i = 0, e = go.numel(); i < e; ++i)
                ga.data()[i] = go.data()[i] * factor;
            t.accumulate(na, ga);
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// activations
// ---------------------------------------------------------------------------

namespace detail {

template <typename S, typename F, typename G>
Tensor<S> unary_op(const Tensor<S>& a, const char* name, F fwd, G bwd_factor) {
    check_valid_operand(a, name);
    Tensor<S> out(a.shape());
    const S* pa = a.data();
    S* po = out.data();
    for (std::size_t i = 0, e = a.numel(); i < e; ++i) po[i] = fwd(pa[i]);

    if (Tape<S>* tape = Tape<S>::active(); tape && a.requires_grad()) {
        const auto na = tape->leaf_node(a);
        const auto no = tape->result_node(out);
        tape->record(no, [=](Tape<S>& t) {
            const Tensor<S>& go = t.grad_at(no);
            Tensor<S> ga(go.shape());
            const S* g = go.data();
            const S* x = a.data();
            const S* y = out.data();
            S* p = ga.data();
            for (std::size_t i = 0, e = go.numel(); i < e; ++i)
                p[i] = g[i] * bwd_factor(x[i], y[i]);
            t.accumulate(na, ga);
        });
    }
    return out;
}

}  // namespace detail

template <typename S>
Tensor<S> relu(const Tensor<S>& a) {
    return detail::unary_op(
        a, "relu", [](S x) { return x > S(0) ? x : S(0); },
        [](S x, S) { return x > S(0) ? S(1) : S(0); });
}

template <typename S>
Tensor<S> leaky_relu(const Tensor<S>& a, S slope) {
    return detail::unary_op(
        a, "leaky_relu", [slope](S x) { return x > S(0) ? x : slope * x; },
        [slope](S x, S) { return x > S(0) ? S(1) : slope; });
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& a) {
    return detail::unary_op(
        a, "sigmoid", [](S x) { return S(1) / (S(1) + std::exp(-x)); },
        [](S, S y) { return y * (S(1) - y); });
}

// ---------------------------------------------------------------------------
// structure: concat, shuffles, pooling, reductions
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> concat_channels(const std::vector<Tensor<S>>& parts) {
    check(!parts.empty(), "concat_channels: no inputs");
    int c_total = 0;
    for (const auto& p : parts) {
        check_valid_operand(p, "concat_channels");
        check(p.n() == parts[0].n() && p.h() == parts[0].h() && p.w() == parts[0].w(),
              "concat_channels: N/H/W mismatch");
        c_total += p.c();
    }
    const int N = parts[0].n(), H = parts[0].h(), W = parts[0].w();
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    Tensor<S> out(N, c_total, H, W);
    for (int n = 0; n < N; ++n) {
        int c0 = 0;
        for (const auto& p : parts) {
            const S* src = p.data() + static_cast<std::size_t>(n) * p.c() * plane;
            S* dst = out.data() + (static_cast<std::size_t>(n) * c_total + c0) * plane;
            std::copy(src, src + static_cast<std::size_t>(p.c()) * plane, dst);
            c0 += p.c();
        }
    }

    Tape<S>* tape = Tape<S>::active();
    bool any_grad = false;
    for (const auto& p : parts) any_grad |= p.requires_grad();
    if (tape && any_grad) {
        std::vector<std::int64_t> nodes;
        std::vector<int> channels;
        for (const auto& p : parts) {
            nodes.push_back(tape->leaf_node(p));
            channels.push_back(p.c());
        }
        const auto no = tape->result_node(out);
        tape->record(no, [=](Tape<S>& t) {
            const Tensor<S>& go = t.grad_at(no);
            int c0 = 0;
            for (std::size_t i = 0; i < nodes.size(); ++i) {
                if (nodes[i] >= 0) {
                    Tensor<S> slice(N, channels[i], H, W);
                    for (int n = 0; n < N; ++n) {
                        const S* src =
                            go.data() + (static_cast<std::size_t>(n) * c_total + c0) * plane;
                        S* dst =
                            slice.data() + static_cast<std::size_t>(n) * channels[i] * plane;
                        std::copy(src, src + static_cast<std::size_t>(channels[i]) * plane,
                                  dst);
                    }
                    t.accumulate(nodes[i], slice);
                }
                c0 += channels[i];
            }
        });
    }
    return out;
}

/// Channel slice [c0, c0+len), used by tests and the group-equivalence suite.
template <typename S>
Tensor<S> slice_channels(const Tensor<S>& a, int c0, int len) {
    check_valid_operand(a, "slice_channels");
    check(c0 >= 0 && len >= 1 && c0 + len <= a.c(), "slice_channels: bad range");
    const int N = a.n(), H = a.h(), W = a.w();
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    Tensor<S> out(N, len, H, W);
    for (int n = 0; n < N; ++n) {
        const S* src = a.data() + (static_cast<std::size_t>(n) * a.c() + c0) * plane;
        S* dst = out.data() + static_cast<std::size_t>(n) * len * plane;
        std::copy(src, src + static_cast<std::size_t>(len) * plane, dst);
    }
    return out;
}

namespace detail {

// out channel p = inner*groups + g where in channel c = g*(C/groups) + inner
template <typename S>
Tensor<S> channel_shuffle_fwd(const Tensor<S>& a, int groups) {
    const int N = a.n(), C = a.c(), H = a.h(), W = a.w();
    const int per = C / groups;
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    Tensor<S> out(a.shape());
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const int g = c / per, inner = c % per;
            const int p = inner * groups + g;
            const S* src = a.data() + (static_cast<std::size_t>(n) * C + c) * plane;
            S* dst = out.data() + (static_cast<std::size_t>(n) * C + p) * plane;
            std::copy(src, src + plane, dst);
        }
    }
    return out;
}

}  // namespace detail

/// Transposes the (groups, C/groups) channel index pair; pure permutation.
template <typename S>
Tensor<S> channel_shuffle(const Tensor<S>& a, int groups) {
    check_valid_operand(a, "channel_shuffle");
    check(groups >= 1 && a.c() % groups == 0,
          "channel_shuffle: C=" + std::to_string(a.c()) + " not divisible by groups=" +
              std::to_string(groups));
    Tensor<S> out = detail::channel_shuffle_fwd(a, groups);

    if (Tape<S>* tape = Tape<S>::active(); tape && a.requires_grad()) {
        const auto na = tape->leaf_node(a);
        const auto no = tape->result_node(out);
        const int inv = a.c() / groups;
        tape->record(no, [=](Tape<S>& t) {
            t.accumulate(na, detail::channel_shuffle_fwd(t.grad_at(no), inv));
        });
    }
    return out;
}

namespace detail {

// out[n, c, r*y+dy, r*x+dx] = in[n, c*r^2 + dy*r + dx, y, x]
template <typename S>
Tensor<S> pixel_shuffle_fwd(const Tensor<S>& a, int r) {
    const int N = a.n(), C = a.c(), H = a.h(), W = a.w();
    const int Co = C / (r * r);
    Tensor<S> out(N, Co, H * r, W * r);
    for (int n = 0; n < N; ++n)
        for (int co = 0; co < Co; ++co)
            for (int dy = 0; dy < r; ++dy)
                for (int dx = 0; dx < r; ++dx) {
                    const int ci = co * r * r + dy * r + dx;
                    for (int y = 0; y < H; ++y) {
                        const S* src =
                            a.data() +
                            ((static_cast<std::size_t>(n) * C + ci) * H + y) * W;
                        S* dst = out.data() +
                                 ((static_cast<std::size_t>(n) * Co + co) * (H * r) +
                                  (y * r + dy)) * (W * r) + dx;
                        for (int x = 0; x < W; ++x) dst[static_cast<std::size_t>(x) * r] = src[x];
                    }
                }
    return out;
}

template <typename S>
Tensor<S> pixel_unshuffle_fwd(const Tensor<S>& a, int r) {
    const int N = a.n(), C = a.c(), H = a.h() / r, W = a.w() / r;
    const int Co = C * r * r;
    Tensor<S> out(N, Co, H, W);
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int dy = 0; dy < r; ++dy)
                for (int dx = 0; dx < r; ++dx) {
                    const int co = c * r * r + dy * r + dx;
                    for (int y = 0; y < H; ++y) {
                        const S* src = a.data() +
                                       ((static_cast<std::size_t>(n) * C + c) * (H * r) +
                                        (y * r + dy)) * (W * r) + dx;
                        S* dst = out.data() +
                                 ((static_cast<std::size_t>(n) * Co + co) * H + y) * W;
                        for (int x = 0; x < W; ++x) dst[x] = src[static_cast<std::size_t>(x) * r];
                    }
                }
    return out;
}

}  // namespace detail

/// Sub-pixel rearrangement: (N, C, H, W) -> (N, C/r^2, rH, rW).
template <typename S>
Tensor<S> pixel_shuffle(const Tensor<S>& a, int r) {
    check_valid_operand(a, "pixel_shuffle");
    check(r >= 1 && a.c() % (r * r) == 0,
          "pixel_shuffle: C=" + std::to_string(a.c()) + " not divisible by r^2=" +
              std::to_string(r * r));
    Tensor<S> out = detail::pixel_shuffle_fwd(a, r);
    if (Tape<S>* tape = Tape<S>::active(); tape && a.requires_grad()) {
        const auto na = tape->leaf_node(a);
        const auto no = tape->result_node(out);
        tape->record(no, [=](Tape<S>& t) {
            t.accumulate(na, detail::pixel_unshuffle_fwd(t.grad_at(no), r));
        });
    }
    return out;
}

/// Inverse of pixel_shuffle: (N, C, rH, rW) -> (N, C*r^2, H, W).
template <typename S>
Tensor<S> pixel_unshuffle(const Tensor<S>& a, int r) {
    check_valid_operand(a, "pixel_unshuffle");
    check(r >= 1 && a.h() % r == 0 && a.w() % r == 0,
          "pixel_unshuffle: spatial extent not divisible by r");
    Tensor<S> out = detail::pixel_unshuffle_fwd(a, r);
    if (Tape<S>* tape = Tape<S>::active(); tape && a.requires_grad()) {
        const auto na = tape->leaf_node(a);
        const auto no = tape->result_node(out);
        tape->record(no, [=](Tape<S>& t) {
            t.accumulate(na, detail::pixel_shuffle_fwd(t.grad_at(no), r));
        });
    }
    return out;
}

/// Spatial mean per channel: (N, C, H, W) -> (N, C, 1, 1).
template <typename S>
Tensor<S> global_avg_pool(const Tensor<S>& a) {
    check_valid_operand(a, "global_avg_pool");
    const std::size_t plane = static_cast<std::size_t>(a.h()) * a.w();
    Tensor<S> out = detail::reduce_spatial(a);
    const S inv = S(1) / static_cast<S>(plane);
    for (std::size_t i = 0, e = out.numel(); i < e; ++i) out.data()[i] *= inv;

    if (Tape<S>* tape = Tape<S>::active(); tape && a.requires_grad()) {
        const auto na = tape->leaf_node(a);
        const auto no = tape->result_node(out);
        const Shape4 in_shape = a.shape();
        tape->record(no, [=](Tape<S>& t) {
            const Tensor<S>& go = t.grad_at(no);
            Tensor<S> ga(in_shape);
            const int N = in_shape.n, C = in_shape.c;
            for (int n = 0; n < N; ++n)
                for (int c = 0; c < C; ++c) {
                    const S v = go.data()[n * C + c] * inv;
                    S* p = ga.data() + (static_cast<std::size_t>(n) * C + c) * plane;
                    for (std::size_t i = 0; i < plane; ++i) p[i] = v;
                }
            t.accumulate(na, ga);
        });
    }
    return out;
}

/// Sum of all elements -> scalar tensor (1,1,1,1).
template <typename S>
Tensor<S> sum_all(const Tensor<S>& a) {
    check_valid_operand(a, "sum_all");
    S acc = 0;
    const S* p = a.data();
    for (std::size_t i = 0, e = a.numel(); i < e; ++i) acc += p[i];
    Tensor<S> out = Tensor<S>::scalar(acc);

    if (Tape<S>* tape = Tape<S>::active(); tape && a.requires_grad()) {
        const auto na = tape->leaf_node(a);
        const auto no = tape->result_node(out);
        const Shape4 in_shape = a.shape();
        tape->record(no, [=](Tape<S>& t) {
            const S g = t.grad_at(no).data()[0];
            t.accumulate(na, Tensor<S>::full(in_shape, g));
        });
    }
    return out;
}

/// Mean absolute error over all elements; subgradient 0 at exact ties.
template <typename S>
Tensor<S> l1_loss(const Tensor<S>& pred, const Tensor<S>& target) {
    check_valid_operand(pred, "l1_loss");
    check_valid_operand(target, "l1_loss");
    check(pred.shape() == target.shape(),
          "l1_loss: shape mismatch " + pred.shape().str() + " vs " + target.shape().str());
    const std::size_t n = pred.numel();
    S acc = 0;
    for (std::size_t i = 0; i < n; ++i) acc += std::abs(pred.data()[i] - target.data()[i]);
    Tensor<S> out = Tensor<S>::scalar(acc / static_cast<S>(n));

    if (Tape<S>* tape = Tape<S>::active();
        tape && (pred.requires_grad() || target.requires_grad())) {
        const auto np = tape->leaf_node(pred);
        const auto nt = tape->leaf_node(target);
        const auto no = tape->result_node(out);
        tape->record(no, [=](Tape<S>& t) {
            const S g = t.grad_at(no).data()[0] / static_cast<S>(n);
            Tensor<S> gp(pred.shape());
            for (std::size_t i = 0; i < n; ++i) {
                const S d = pred.data()[i] - target.data()[i];
                gp.data()[i] = d > S(0) ? g : (d < S(0) ? -g : S(0));
            }
            if (np >= 0) t.accumulate(np, gp);
            if (nt >= 0) {
                Tensor<S> gt(target.shape());
                for (std::size_t i = 0; i < n; ++i) gt.data()[i] = -gp.data()[i];
                t.accumulate(nt, gt);
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// spatial padding / cropping (arbitrary-size inference support)
// ---------------------------------------------------------------------------

namespace detail {

inline int reflect_index(int i, int n) {
    // reflect-101 about the borders; degenerates to clamping when n == 1
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i = ((i % period) + period) % period;
    return i < n ? i : period - i;
}

}  // namespace detail

/// Reflect-pads the bottom/right spatial borders (reflect-101, falling back
/// to edge replication for single-pixel extents).
template <typename S>
Tensor<S> pad_edges(const Tensor<S>& a, int pad_bottom, int pad_right) {
    check_valid_operand(a, "pad_edges");
    check(pad_bottom >= 0 && pad_right >= 0, "pad_edges: negative pad");
    if (pad_bottom == 0 && pad_right == 0) return a;
    const int N = a.n(), C = a.c(), H = a.h(), W = a.w();
    const int Ho = H + pad_bottom, Wo = W + pad_right;
    Tensor<S> out(N, C, Ho, Wo);
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < Ho; ++y) {
                const int sy = detail::reflect_index(y, H);
                for (int x = 0; x < Wo; ++x)
                    out.at(n, c, y, x) = a.at(n, c, sy, detail::reflect_index(x, W));
            }

    if (Tape<S>* tape = Tape<S>::active(); tape && a.requires_grad()) {
        const auto na = tape->leaf_node(a);
        const auto no = tape->result_node(out);
        const Shape4 in_shape = a.shape();
        tape->record(no, [=](Tape<S>& t) {
            const Tensor<S>& go = t.grad_at(no);
            Tensor<S> ga(in_shape);
            for (int n = 0; n < N; ++n)
                for (int c = 0; c < C; ++c)
                    for (int y = 0; y < Ho; ++y) {
                        const int sy = detail::reflect_index(y, H);
                        for (int x = 0; x < Wo; ++x)
                            ga.at(n, c, sy, detail::reflect_index(x, W)) +=
                                go.at(n, c, y, x);
                    }
            t.accumulate(na, ga);
        });
    }
    return out;
}

/// Crops the spatial window [0,h) x [0,w) from the top-left corner.
template <typename S>
Tensor<S> crop_top_left(const Tensor<S>& a, int h, int w) {
    check_valid_operand(a, "crop_top_left");
    check(h >= 1 && w >= 1 && h <= a.h() && w <= a.w(), "crop_top_left: bad window");
    if (h == a.h() && w == a.w()) return a;
    const int N = a.n(), C = a.c();
    Tensor<S> out(N, C, h, w);
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) out.at(n, c, y, x) = a.at(n, c, y, x);

    if (Tape<S>* tape = Tape<S>::active(); tape && a.requires_grad()) {
        const auto na = tape->leaf_node(a);
        const auto no = tape->result_node(out);
        const Shape4 in_shape = a.shape();
        tape->record(no, [=](Tape<S>& t) {
            const Tensor<S>& go = t.grad_at(no);
            Tensor<S> ga(in_shape);
            for (int n = 0; n < N; ++n)
                for (int c = 0; c < C; ++c)
                    for (int y = 0; y < h; ++y)
                        for (int x = 0; x < w; ++x)
                            ga.at(n, c, y, x) = go.at(n, c, y, x);
            t.accumulate(na, ga);
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// dihedral transforms (the 8-way geometric self-ensemble group)
// ---------------------------------------------------------------------------

/// Applies dihedral element `code` in 0..7: optional horizontal flip
/// (code & 4) followed by (code & 3) counter-clockwise quarter turns.
template <typename S>
Tensor<S> dihedral(const Tensor<S>& a, int code) {
    check_valid_operand(a, "dihedral");
    check(code >= 0 && code < 8, "dihedral: code out of range");
    const int N = a.n(), C = a.c(), H = a.h(), W = a.w();
    const int rot = code & 3;
    const bool flip = code & 4;
    const bool swap = rot & 1;
    Tensor<S> out(N, C, swap ? W : H, swap ? H : W);
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x) {
                    const int sx = flip ? W - 1 - x : x;
                    int oy = y, ox = x;
                    switch (rot) {  // CCW rotation of the (y, x) grid
                        case 0: oy = y; ox = x; break;
                        case 1: oy = W - 1 - x; ox = y; break;
                        case 2: oy = H - 1 - y; ox = W - 1 - x; break;
                        case 3: oy = x; ox = H - 1 - y; break;
                    }
                    out.at(n, c, oy, ox) = a.at(n, c, y, sx);
                }

    if (Tape<S>* tape = Tape<S>::active(); tape && a.requires_grad()) {
        const auto na = tape->leaf_node(a);
        const auto no = tape->result_node(out);
        tape->record(no, [=](Tape<S>& t) {
            t.accumulate(na, dihedral_inverse(t.grad_at(no), code));
        });
    }
    return out;
}

/// Inverse of dihedral(·, code).
template <typename S>
Tensor<S> dihedral_inverse(const Tensor<S>& a, int code) {
    check(code >= 0 && code < 8, "dihedral_inverse: code out of range");
    const int rot = code & 3;
    const bool flip = code & 4;
    Tensor<S> un = dihedral(a, (4 - rot) & 3);  // undo rotation
    if (!flip) return un;
    return dihedral(un, 4);  // undo flip
}

}  // namespace msfin

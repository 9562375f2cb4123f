// Copyright (c) 2026 MSFIN contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>

#include "msfin/autograd.hpp"
#include "msfin/parallel.hpp"
#include "msfin/tensor.hpp"

namespace msfin {
namespace detail {

// Direct convolution kernels. Written as gathers with each output (or
// gradient) element owned by exactly one thread and accumulated in a fixed
// serial order, so results are bit-identical for any MSFIN_THREADS value.

template <typename S>
Tensor<S> conv2d_fwd(const Tensor<S>& in, const Tensor<S>& w, const Tensor<S>& b,
                     int stride, int padding, int groups) {
    const int N = in.n(), Ci = in.c(), H = in.h(), W = in.w();
    const int Co = w.n(), Cig = w.c(), k = w.h();
    const int Ho = (H + 2 * padding - k) / stride + 1;
    const int Wo = (W + 2 * padding - k) / stride + 1;
    Tensor<S> out(N, Co, Ho, Wo);
    const int co_per_g = Co / groups;

    parallel_for(0, static_cast<std::int64_t>(N) * Co, [&](std::int64_t job) {
        const int n = static_cast<int>(job / Co);
        const int co = static_cast<int>(job % Co);
        const int ci0 = (co / co_per_g) * Cig;
        S* out_plane = out.data() + ((static_cast<std::size_t>(n) * Co + co) * Ho) * Wo;
        const S bias = b.data()[co];
        for (std::size_t i = 0, e = static_cast<std::size_t>(Ho) * Wo; i < e; ++i)
            out_plane[i] = bias;
        for (int cl = 0; cl < Cig; ++cl) {
            const S* in_plane =
                in.data() + ((static_cast<std::size_t>(n) * Ci + ci0 + cl) * H) * W;
            const S* w_k = w.data() + ((static_cast<std::size_t>(co) * Cig + cl) * k) * k;
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    const S wv = w_k[ky * k + kx];
                    if (wv == S(0)) continue;
                    // valid output x range keeping ix = ox*stride - padding + kx inside [0, W)
                    const int ox_lo = std::max(0, (padding - kx + stride - 1) / stride);
                    const int ox_hi = std::min(Wo, (W - 1 + padding - kx) / stride + 1);
                    for (int oy = 0; oy < Ho; ++oy) {
                        const int iy = oy * stride - padding + ky;
                        if (iy < 0 || iy >= H) continue;
                        const S* in_row = in_plane + static_cast<std::size_t>(iy) * W;
                        S* out_row = out_plane + static_cast<std::size_t>(oy) * Wo;
                        int ix = ox_lo * stride - padding + kx;
                        for (int ox = ox_lo; ox < ox_hi; ++ox, ix += stride)
                            out_row[ox] += wv * in_row[ix];
                    }
                }
            }
        }
    });
    return out;
}

template <typename S>
Tensor<S> conv2d_bwd_input(const Tensor<S>& gout, const Tensor<S>& w, Shape4 in_shape,
                           int stride, int padding, int groups) {
    const int N = in_shape.n, Ci = in_shape.c, H = in_shape.h, W = in_shape.w;
    const int Co = w.n(), Cig = w.c(), k = w.h();
    const int Ho = gout.h(), Wo = gout.w();
    const int co_per_g = Co / groups;
    Tensor<S> gin(in_shape);

    parallel_for(0, static_cast<std::int64_t>(N) * Ci, [&](std::int64_t job) {
        const int n = static_cast<int>(job / Ci);
        const int ci = static_cast<int>(job % Ci);
        const int g = ci / Cig;
        const int cl = ci % Cig;
        S* gin_plane = gin.data() + ((static_cast<std::size_t>(n) * Ci + ci) * H) * W;
        for (int col = 0; col < co_per_g; ++col) {
            const int co = g * co_per_g + col;
            const S* go_plane =
                gout.data() + ((static_cast<std::size_t>(n) * Co + co) * Ho) * Wo;
            const S* w_k = w.data() + ((static_cast<std::size_t>(co) * Cig + cl) * k) * k;
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    const S wv = w_k[ky * k + kx];
                    if (wv == S(0)) continue;
                    for (int oy = 0; oy < Ho; ++oy) {
                        const int iy = oy * stride - padding + ky;
                        if (iy < 0 || iy >= H) continue;
                        const S* go_row = go_plane + static_cast<std::size_t>(oy) * Wo;
                        S* gin_row = gin_plane + static_cast<std::size_t>(iy) * W;
                        const int ox_lo = std::max(0, (padding - kx + stride - 1) / stride);
                        const int ox_hi = std::min(Wo, (W - 1 + padding - kx) / stride + 1);
                        int ix = ox_lo * stride - padding + kx;
                        for (int ox = ox_lo; ox < ox_hi; ++ox, ix += stride)
                            gin_row[ix] += wv * go_row[ox];
                    }
                }
            }
        }
    });
    return gin;
}

template <typename S>
Tensor<S> conv2d_bwd_weight(const Tensor<S>& gout, const Tensor<S>& in, Shape4 w_shape,
                            int stride, int padding, int groups) {
    const int N = in.n(), Ci = in.c(), H = in.h(), W = in.w();
    const int Co = w_shape.n, Cig = w_shape.c, k = w_shape.h;
    const int Ho = gout.h(), Wo = gout.w();
    const int co_per_g = Co / groups;
    Tensor<S> gw(w_shape);

    parallel_for(0, Co, [&](std::int64_t co64) {
        const int co = static_cast<int>(co64);
        const int ci0 = (co / co_per_g) * Cig;
        for (int cl = 0; cl < Cig; ++cl) {
            S* gw_k = gw.data() + ((static_cast<std::size_t>(co) * Cig + cl) * k) * k;
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    S acc = 0;
                    for (int n = 0; n < N; ++n) {
                        const S* go_plane =
                            gout.data() +
                            ((static_cast<std::size_t>(n) * Co + co) * Ho) * Wo;
                        const S* in_plane =
                            in.data() +
                            ((static_cast<std::size_t>(n) * Ci + ci0 + cl) * H) * W;
                        const int ox_lo = std::max(0, (padding - kx + stride - 1) / stride);
                        const int ox_hi = std::min(Wo, (W - 1 + padding - kx) / stride + 1);
                        for (int oy = 0; oy < Ho; ++oy) {
                            const int iy = oy * stride - padding + ky;
                            if (iy < 0 || iy >= H) continue;
                            const S* go_row = go_plane + static_cast<std::size_t>(oy) * Wo;
                            const S* in_row = in_plane + static_cast<std::size_t>(iy) * W;
                            int ix = ox_lo * stride - padding + kx;
                            for (int ox = ox_lo; ox < ox_hi; ++ox, ix += stride)
                                acc += go_row[ox] * in_row[ix];
                        }
                    }
                    gw_k[ky * k + kx] = acc;
                }
            }
        }
    });
    return gw;
}

template <typename S>
Tensor<S> bwd_bias(const Tensor<S>& gout) {
    const int N = gout.n(), Co = gout.c();
    const std::size_t plane = static_cast<std::size_t>(gout.h()) * gout.w();
    Tensor<S> gb(1, Co, 1, 1);
    for (int co = 0; co < Co; ++co) {
        S acc = 0;
        for (int n = 0; n < N; ++n) {
            const S* p = gout.data() + (static_cast<std::size_t>(n) * Co + co) * plane;
            for (std::size_t i = 0; i < plane; ++i) acc += p[i];
        }
        gb.data()[co] = acc;
    }
    return gb;
}

template <typename S>
Tensor<S> deconv2d_fwd(const Tensor<S>& in, const Tensor<S>& w, const Tensor<S>& b,
                       int stride, int padding) {
    const int N = in.n(), Ci = in.c(), H = in.h(), W = in.w();
    const int Co = w.c(), k = w.h();
    const int Ho = (H - 1) * stride - 2 * padding + k;
    const int Wo = (W - 1) * stride - 2 * padding + k;
    Tensor<S> out(N, Co, Ho, Wo);

    parallel_for(0, static_cast<std::int64_t>(N) * Co, [&](std::int64_t job) {
        const int n = static_cast<int>(job / Co);
        const int co = static_cast<int>(job % Co);
        S* out_plane = out.data() + ((static_cast<std::size_t>(n) * Co + co) * Ho) * Wo;
        const S bias = b.data()[co];
        for (int oy = 0; oy < Ho; ++oy) {
            for (int ox = 0; ox < Wo; ++ox) {
                S acc = bias;
                // contributions: oy = iy*stride - padding + ky
                for (int ky = 0; ky < k; ++ky) {
                    const int ty = oy + padding - ky;
                    if (ty < 0 || ty % stride) continue;
                    const int iy = ty / stride;
                    if (iy >= H) continue;
                    for (int kx = 0; kx < k; ++kx) {
                        const int tx = ox + padding - kx;
                        if (tx < 0 || tx % stride) continue;
                        const int ix = tx / stride;
                        if (ix >= W) continue;
                        for (int ci = 0; ci < Ci; ++ci) {
                            acc += in.at(n, ci, iy, ix) *
                                   w.data()[((static_cast<std::size_t>(ci) * Co + co) * k + ky) * k + kx];
                        }
                    }
                }
                out_plane[static_cast<std::size_t>(oy) * Wo + ox] = acc;
            }
        }
    });
    return out;
}

template <typename S>
Tensor<S> deconv2d_bwd_input(const Tensor<S>& gout, const Tensor<S>& w, Shape4 in_shape,
                             int stride, int padding) {
    const int N = in_shape.n, Ci = in_shape.c, H = in_shape.h, W = in_shape.w;
    const int Co = w.c(), k = w.h();
    const int Ho = gout.h(), Wo = gout.w();
    Tensor<S> gin(in_shape);

    parallel_for(0, static_cast<std::int64_t>(N) * Ci, [&](std::int64_t job) {
        const int n = static_cast<int>(job / Ci);
        const int ci = static_cast<int>(job % Ci);
        S* gin_plane = gin.data() + ((static_cast<std::size_t>(n) * Ci + ci) * H) * W;
        for (int iy = 0; iy < H; ++iy) {
            for (int ix = 0; ix < W; ++ix) {
                S acc = 0;
                for (int ky = 0; ky < k; ++ky) {
                    const int oy = iy * stride - padding + ky;
                    if (oy < 0 || oy >= Ho) continue;
                    for (int kx = 0; kx < k; ++kx) {
                        const int ox = ix * stride - padding + kx;
                        if (ox < 0 || ox >= Wo) continue;
                        for (int co = 0; co < Co; ++co) {
                            acc += gout.at(n, co, oy, ox) *
                                   w.data()[((static_cast<std::size_t>(ci) * Co + co) * k + ky) * k + kx];
                        }
                    }
                }
                gin_plane[static_cast<std::size_t>(iy) * W + ix] = acc;
            }
        }
    });
    return gin;
}

template <typename S>
Tensor<S> deconv2d_bwd_weight(const Tensor<S>& gout, const Tensor<S>& in, Shape4 w_shape,
                              int stride, int padding) {
    const int N = in.n(), Ci = in.c(), H = in.h(), W = in.w();
    const int Co = w_shape.c, k = w_shape.h;
    const int Ho = gout.h(), Wo = gout.w();
    Tensor<S> gw(w_shape);

    parallel_for(0, Ci, [&](std::int64_t ci64) {
        const int ci = static_cast<int>(ci64);
        for (int co = 0; co < Co; ++co) {
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    S acc = 0;
                    for (int n = 0; n < N; ++n) {
                        for (int iy = 0; iy < H; ++iy) {
                            const int oy = iy * stride - padding + ky;
                            if (oy < 0 || oy >= Ho) continue;
                            for (int ix = 0; ix < W; ++ix) {
                                const int ox = ix * stride - padding + kx;
                                if (ox < 0 || ox >= Wo) continue;
                                acc += in.at(n, ci, iy, ix) * gout.at(n, co, oy, ox);
                            }
                        }
                    }
                    gw.data()[((static_cast<std::size_t>(ci) * Co + co) * k + ky) * k + kx] = acc;
                }
            }
        }
    });
    return gw;
}

}  // namespace detail

/// 2-D convolution, zero padding, square kernel, optional channel groups.
/// weight (C_out, C_in/groups, k, k), bias (1, C_out, 1, 1).
template <typename S>
Tensor<S> conv2d(const Tensor<S>& input, const Tensor<S>& weight, const Tensor<S>& bias,
                 int stride, int padding, int groups) {
    check_valid_operand(input, "conv2d input");
    check_valid_operand(weight, "conv2d weight");
    check_valid_operand(bias, "conv2d bias");
    const int Ci = input.c(), Co = weight.n(), k = weight.h();
    check(stride >= 1 && padding >= 0 && groups >= 1, "conv2d: bad stride/padding/groups");
    check(weight.w() == k, "conv2d: kernel must be square");
    check(Ci % groups == 0 && Co % groups == 0,
          "conv2d: channels not divisible by groups (C_in=" + std::to_string(Ci) +
              ", C_out=" + std::to_string(Co) + ", groups=" + std::to_string(groups) + ")");
    check(weight.c() == Ci / groups,
          "conv2d: weight expects C_in/groups=" + std::to_string(weight.c()) +
              " input channels per group, got " + std::to_string(Ci / groups));
    check(static_cast<int>(bias.numel()) == Co, "conv2d: bias size != C_out");
    check(k <= input.h() + 2 * padding && k <= input.w() + 2 * padding,
          "conv2d: kernel larger than padded input");

    Tensor<S> out = detail::conv2d_fwd(input, weight, bias, stride, padding, groups);

    if (Tape<S>* tape = Tape<S>::active();
        tape && (input.requires_grad() || weight.requires_grad() || bias.requires_grad())) {
        const auto ni = tape->leaf_node(input);
        const auto nw = tape->leaf_node(weight);
        const auto nb = tape->leaf_node(bias);
        const auto no = tape->result_node(out);
        const Shape4 in_shape = input.shape(), w_shape = weight.shape();
        tape->record(no, [=](Tape<S>& t) {
            const Tensor<S>& go = t.grad_at(no);
            if (ni >= 0)
                t.accumulate(ni, detail::conv2d_bwd_input(go, weight, in_shape, stride,
                                                          padding, groups));
            if (nw >= 0)
                t.accumulate(nw, detail::conv2d_bwd_weight(go, input, w_shape, stride,
                                                           padding, groups));
            if (nb >= 0) t.accumulate(nb, detail::bwd_bias(go));
        });
    }
    return out;
}

/// Transposed 2-D convolution (the adjoint of conv2d in its input).
/// weight (C_in, C_out, k, k), bias (1, C_out, 1, 1). The architecture only
/// uses stride 2, k=4, padding 1, which maps H x W to exactly 2H x 2W.
template <typename S>
Tensor<S> conv_transpose2d(const Tensor<S>& input, const Tensor<S>& weight,
                           const Tensor<S>& bias, int stride, int padding) {
    check_valid_operand(input, "conv_transpose2d input");
    check_valid_operand(weight, "conv_transpose2d weight");
    check_valid_operand(bias, "conv_transpose2d bias");
    const int k = weight.h();
    check(stride >= 1 && padding >= 0, "conv_transpose2d: bad stride/padding");
    check(weight.w() == k, "conv_transpose2d: kernel must be square");
    check(weight.n() == input.c(), "conv_transpose2d: weight C_in != input channels");
    check(static_cast<int>(bias.numel()) == weight.c(),
          "conv_transpose2d: bias size != C_out");
    const int Ho = (input.h() - 1) * stride - 2 * padding + k;
    const int Wo = (input.w() - 1) * stride - 2 * padding + k;
    check(Ho >= 1 && Wo >= 1, "conv_transpose2d: non-positive output extent");

    Tensor<S> out = detail::deconv2d_fwd(input, weight, bias, stride, padding);

    if (Tape<S>* tape = Tape<S>::active();
        tape && (input.requires_grad() || weight.requires_grad() || bias.requires_grad())) {
        const auto ni = tape->leaf_node(input);
        const auto nw = tape->leaf_node(weight);
        const auto nb = tape->leaf_node(bias);
        const auto no = tape->result_node(out);
        const Shape4 in_shape = input.shape(), w_shape = weight.shape();
        tape->record(no, [=](Tape<S>& t) {
            const Tensor<S>& go = t.grad_at(no);
            if (ni >= 0)
                t.accumulate(ni, detail::deconv2d_bwd_input(go, weight, in_shape, stride,
                                                            padding));
            if (nw >= 0)
                t.accumulate(nw, detail::deconv2d_bwd_weight(go, input, w_shape, stride,
                                                             padding));
            if (nb >= 0) t.accumulate(nb, detail::bwd_bias(go));
        });
    }
    return out;
}

}  // namespace msfin

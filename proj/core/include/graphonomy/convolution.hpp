#pragma once

#include "graphonomy/tensor.hpp"

namespace graphonomy::num {

// Spatial ops over feature maps stored as [B*H*W x C] row-major tensors with
// explicit (batch, height, width) metadata. Channel-last layout keeps the
// im2col matmul contiguous.

namespace detail {

template <typename S>
void im2col(const S* x, std::int64_t b, std::int64_t h, std::int64_t w, std::int64_t cin,
            std::int64_t kh, std::int64_t kw, std::int64_t stride, std::int64_t pad,
            std::int64_t ho, std::int64_t wo, S* col) {
    const std::int64_t patch = kh * kw * cin;
    for (std::int64_t img = 0; img < b; ++img) {
        const S* xi = x + img * h * w * cin;
        S* ci = col + img * ho * wo * patch;
        for (std::int64_t oy = 0; oy < ho; ++oy) {
            for (std::int64_t ox = 0; ox < wo; ++ox) {
                S* crow = ci + (oy * wo + ox) * patch;
                for (std::int64_t ky = 0; ky < kh; ++ky) {
                    const std::int64_t iy = oy * stride - pad + ky;
                    for (std::int64_t kx = 0; kx < kw; ++kx) {
                        const std::int64_t ix = ox * stride - pad + kx;
                        S* dst = crow + (ky * kw + kx) * cin;
                        if (iy < 0 || iy >= h || ix < 0 || ix >= w) {
                            for (std::int64_t c = 0; c < cin; ++c) dst[c] = S(0);
                        } else {
                            const S* src = xi + (iy * w + ix) * cin;
                            for (std::int64_t c = 0; c < cin; ++c) dst[c] = src[c];
                        }
                    }
                }
            }
        }
    }
}

template <typename S>
void col2im_acc(const S* col, std::int64_t b, std::int64_t h, std::int64_t w, std::int64_t cin,
                std::int64_t kh, std::int64_t kw, std::int64_t stride, std::int64_t pad,
                std::int64_t ho, std::int64_t wo, S* dx) {
    const std::int64_t patch = kh * kw * cin;
    for (std::int64_t img = 0; img < b; ++img) {
        S* dxi = dx + img * h * w * cin;
        const S* ci = col + img * ho * wo * patch;
        for (std::int64_t oy = 0; oy < ho; ++oy) {
            for (std::int64_t ox = 0; ox < wo; ++ox) {
                const S* crow = ci + (oy * wo + ox) * patch;
                for (std::int64_t ky = 0; ky < kh; ++ky) {
                    const std::int64_t iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    for (std::int64_t kx = 0; kx < kw; ++kx) {
                        const std::int64_t ix = ox * stride - pad + kx;
                        if (ix < 0 || ix >= w) continue;
                        const S* src = crow + (ky * kw + kx) * cin;
                        S* dst = dxi + (iy * w + ix) * cin;
                        for (std::int64_t c = 0; c < cin; ++c) dst[c] += src[c];
                    }
                }
            }
        }
    }
}

} // namespace detail

// 2-D convolution; x is [B*H*W x Cin], kernel [kh*kw*Cin x Cout], bias [Cout].
// The im2col buffer is kept alive for the backward pass.
template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, std::int64_t b, std::int64_t h, std::int64_t w,
                 const Tensor<S>& kernel, std::int64_t kh, std::int64_t kw, const Tensor<S>& bias,
                 std::int64_t stride, std::int64_t pad) {
    const std::int64_t cin = x.dim(1);
    if (x.rank() != 2 || x.dim(0) != b * h * w)
        throw DimensionError("conv2d: input " + shape_str(x.shape()) + " does not match B*H*W=" +
                             std::to_string(b * h * w));
    if (kernel.rank() != 2 || kernel.dim(0) != kh * kw * cin)
        throw DimensionError("conv2d: kernel " + shape_str(kernel.shape()) + " does not match " +
                             std::to_string(kh) + "x" + std::to_string(kw) + "x" + std::to_string(cin));
    const std::int64_t cout = kernel.dim(1);
    if (bias.rank() != 1 || bias.dim(0) != cout)
        throw DimensionError("conv2d: bias " + shape_str(bias.shape()) + " for " +
                             std::to_string(cout) + " output channels");
    const std::int64_t ho = (h + 2 * pad - kh) / stride + 1;
    const std::int64_t wo = (w + 2 * pad - kw) / stride + 1;
    if (ho <= 0 || wo <= 0)
        throw DimensionError("conv2d: kernel does not fit input " + shape_str(x.shape()));

    const std::int64_t patch = kh * kw * cin;
    const std::int64_t rows = b * ho * wo;
    auto col = std::make_shared<std::vector<S>>(static_cast<std::size_t>(rows * patch));
    detail::im2col(x.data(), b, h, w, cin, kh, kw, stride, pad, ho, wo, col->data());

    std::vector<S> out(static_cast<std::size_t>(rows * cout), S(0));
    detail::gemm_acc(col->data(), kernel.data(), out.data(), rows, patch, cout);
    const S* pb = bias.data();
    for (std::int64_t r = 0; r < rows; ++r) {
        S* po = out.data() + r * cout;
        for (std::int64_t c = 0; c < cout; ++c) po[c] += pb[c];
    }

    auto xn = x.node(); auto kn = kernel.node(); auto biasn = bias.node();
    return Tensor<S>::make_op(
        {rows, cout}, std::move(out), {x, kernel, bias},
        [xn, kn, biasn, col, b, h, w, cin, kh, kw, stride, pad, ho, wo, rows, patch,
         cout](auto& self) {
            const S* g = self.grad.data();
            if (biasn->requires_grad) {
                auto& gb = biasn->grad_buffer();
                for (std::int64_t r = 0; r < rows; ++r)
                    for (std::int64_t c = 0; c < cout; ++c)
                        gb[static_cast<std::size_t>(c)] += g[r * cout + c];
            }
            if (kn->requires_grad) // dK = col^T * dOut
                detail::gemm_at_b_acc(col->data(), g, kn->grad_buffer().data(), patch, rows, cout);
            if (xn->requires_grad) { // dcol = dOut * K^T, scattered back
                std::vector<S> dcol(static_cast<std::size_t>(rows * patch), S(0));
                detail::gemm_a_bt_acc(g, kn->value.data(), dcol.data(), rows, cout, patch);
                detail::col2im_acc(dcol.data(), b, h, w, cin, kh, kw, stride, pad, ho, wo,
                                   xn->grad_buffer().data());
            }
        });
}

// Bilinear upsampling with the align-corners=false convention. Upscale only.
template <typename S>
Tensor<S> upsample_bilinear(const Tensor<S>& x, std::int64_t b, std::int64_t h, std::int64_t w,
                            std::int64_t ho, std::int64_t wo) {
    const std::int64_t c = x.dim(1);
    if (x.rank() != 2 || x.dim(0) != b * h * w)
        throw DimensionError("upsample_bilinear: input " + shape_str(x.shape()) +
                             " does not match B*H*W=" + std::to_string(b * h * w));
    if (ho < h || wo < w)
        throw UsageError("upsample_bilinear: target " + std::to_string(ho) + "x" + std::to_string(wo) +
                         " smaller than source " + std::to_string(h) + "x" + std::to_string(w));

    struct Tap {
        std::int64_t i0, i1;
        S w1; // weight of i1; i0 gets 1-w1
    };
    auto make_taps = [](std::int64_t in, std::int64_t out) {
        std::vector<Tap> taps(static_cast<std::size_t>(out));
        const double ratio = static_cast<double>(in) / static_cast<double>(out);
        for (std::int64_t o = 0; o < out; ++o) {
            double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
            if (src < 0.0) src = 0.0;
            std::int64_t i0 = static_cast<std::int64_t>(src);
            if (i0 > in - 1) i0 = in - 1;
            std::int64_t i1 = std::min<std::int64_t>(i0 + 1, in - 1);
            taps[static_cast<std::size_t>(o)] = {i0, i1, static_cast<S>(src - static_cast<double>(i0))};
        }
        return taps;
    };
    const auto ty = make_taps(h, ho);
    const auto tx = make_taps(w, wo);

    std::vector<S> out(static_cast<std::size_t>(b * ho * wo * c), S(0));
    const S* px = x.data();
    for (std::int64_t img = 0; img < b; ++img) {
        const S* xi = px + img * h * w * c;
        S* oi = out.data() + img * ho * wo * c;
        for (std::int64_t oy = 0; oy < ho; ++oy) {
            const Tap& yt = ty[static_cast<std::size_t>(oy)];
            for (std::int64_t ox = 0; ox < wo; ++ox) {
                const Tap& xt = tx[static_cast<std::size_t>(ox)];
                const S w00 = (S(1) - yt.w1) * (S(1) - xt.w1);
                const S w01 = (S(1) - yt.w1) * xt.w1;
                const S w10 = yt.w1 * (S(1) - xt.w1);
                const S w11 = yt.w1 * xt.w1;
                const S* p00 = xi + (yt.i0 * w + xt.i0) * c;
                const S* p01 = xi + (yt.i0 * w + xt.i1) * c;
                const S* p10 = xi + (yt.i1 * w + xt.i0) * c;
                const S* p11 = xi + (yt.i1 * w + xt.i1) * c;
                S* po = oi + (oy * wo + ox) * c;
                for (std::int64_t ch = 0; ch < c; ++ch)
                    po[ch] = w00 * p00[ch] + w01 * p01[ch] + w10 * p10[ch] + w11 * p11[ch];
            }
        }
    }
    auto xn = x.node();
    return Tensor<S>::make_op(
        {b * ho * wo, c}, std::move(out), {x}, [xn, ty, tx, b, h, w, ho, wo, c](auto& self) {
            auto& gx = xn->grad_buffer();
            const auto& g = self.grad;
            for (std::int64_t img = 0; img < b; ++img) {
                S* gi = gx.data() + img * h * w * c;
                const S* go = g.data() + img * ho * wo * c;
                for (std::int64_t oy = 0; oy < ho; ++oy) {
                    const Tap& yt = ty[static_cast<std::size_t>(oy)];
                    for (std::int64_t ox = 0; ox < wo; ++ox) {
                        const Tap& xt = tx[static_cast<std::size_t>(ox)];
                        const S w00 = (S(1) - yt.w1) * (S(1) - xt.w1);
                        const S w01 = (S(1) - yt.w1) * xt.w1;
                        const S w10 = yt.w1 * (S(1) - xt.w1);
                        const S w11 = yt.w1 * xt.w1;
                        const S* po = go + (oy * wo + ox) * c;
                        S* p00 = gi + (yt.i0 * w + xt.i0) * c;
                        S* p01 = gi + (yt.i0 * w + xt.i1) * c;
                        S* p10 = gi + (yt.i1 * w + xt.i0) * c;
                        S* p11 = gi + (yt.i1 * w + xt.i1) * c;
                        for (std::int64_t ch = 0; ch < c; ++ch) {
                            p00[ch] += w00 * po[ch];
                            p01[ch] += w01 * po[ch];
                            p10[ch] += w10 * po[ch];
                            p11[ch] += w11 * po[ch];
                        }
                    }
                }
            }
        });
}

} // namespace graphonomy::num

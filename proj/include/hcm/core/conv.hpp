#pragma once

#include <limits>
#include <vector>

#include "hcm/core/autograd.hpp"
#include "hcm/core/gemm.hpp"
#include "hcm/core/tensor.hpp"

namespace hcm {

struct ConvSpec {
    int64_t stride = 1;
    int64_t pad = 0;
    int64_t dilation = 1;

    int64_t out_size(int64_t in, int64_t k) const {
        return (in + 2 * pad - dilation * (k - 1) - 1) / stride + 1;
    }
};

namespace detail {

/// Unfolds one image [C x H x W] into columns [C*kh*kw x Hout*Wout].
inline void im2col(const double* x, int64_t C, int64_t H, int64_t W,
                   int64_t kh, int64_t kw, const ConvSpec& cs,
                   int64_t Hout, int64_t Wout, double* col) {
    const int64_t plane = Hout * Wout;
    for (int64_t c = 0; c < C; ++c) {
        for (int64_t ky = 0; ky < kh; ++ky) {
            for (int64_t kx = 0; kx < kw; ++kx) {
                double* row = col + ((c * kh + ky) * kw + kx) * plane;
                const int64_t y0 = ky * cs.dilation - cs.pad;
                const int64_t x0 = kx * cs.dilation - cs.pad;
                for (int64_t oy = 0; oy < Hout; ++oy) {
                    const int64_t iy = y0 + oy * cs.stride;
                    double* out = row + oy * Wout;
                    if (iy < 0 || iy >= H) {
                        std::fill(out, out + Wout, 0.0);
                        continue;
                    }
                    const double* src = x + (c * H + iy) * W;
                    for (int64_t ox = 0; ox < Wout; ++ox) {
                        const int64_t ix = x0 + ox * cs.stride;
                        out[ox] = (ix >= 0 && ix < W) ? src[ix] : 0.0;
                    }
                }
            }
        }
    }
}

/// Accumulates columns back into an image (adjoint of im2col).
inline void col2im(const double* col, int64_t C, int64_t H, int64_t W,
                   int64_t kh, int64_t kw, const ConvSpec& cs,
                   int64_t Hout, int64_t Wout, double* x) {
    const int64_t plane = Hout * Wout;
    for (int64_t c = 0; c < C; ++c) {
        for (int64_t ky = 0; ky < kh; ++ky) {
            for (int64_t kx = 0; kx < kw; ++kx) {
                const double* row = col + ((c * kh + ky) * kw + kx) * plane;
                const int64_t y0 = ky * cs.dilation - cs.pad;
                const int64_t x0 = kx * cs.dilation - cs.pad;
                for (int64_t oy = 0; oy < Hout; ++oy) {
                    const int64_t iy = y0 + oy * cs.stride;
                    if (iy < 0 || iy >= H) continue;
                    double* dst = x + (c * H + iy) * W;
                    const double* src = row + oy * Wout;
                    for (int64_t ox = 0; ox < Wout; ++ox) {
                        const int64_t ix = x0 + ox * cs.stride;
                        if (ix >= 0 && ix < W) dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

}  // namespace detail

namespace F {

/// 2-D convolution, NCHW. weight is [Cout x Cin x kh x kw]; bias is optional
/// ([Cout] or an undefined Var value). Differentiable in x, weight and bias.
inline Var conv2d(const Var& x, const Var& weight, const Var& bias, const ConvSpec& cs) {
    const Tensor& xv = x.value();
    const Tensor& wv = weight.value();
    HCM_CHECK(xv.ndim() == 4 && wv.ndim() == 4, "conv2d: expects 4-D input and weight");
    const int64_t B = xv.dim(0), Cin = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    const int64_t Cout = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
    HCM_CHECK(wv.dim(1) == Cin, "conv2d: channel mismatch, input " + xv.shape_str() +
                                     " vs weight " + wv.shape_str());
    const int64_t Hout = cs.out_size(H, kh);
    const int64_t Wout = cs.out_size(W, kw);
    HCM_CHECK(Hout > 0 && Wout > 0, "conv2d: empty output");

    const bool has_bias = bias.value().defined();
    const int64_t K = Cin * kh * kw;
    const int64_t plane = Hout * Wout;

    Tensor out({B, Cout, Hout, Wout});
    std::vector<double> col(static_cast<size_t>(K * plane));
    for (int64_t b = 0; b < B; ++b) {
        detail::im2col(xv.data() + b * Cin * H * W, Cin, H, W, kh, kw, cs, Hout, Wout, col.data());
        double* ob = out.data() + b * Cout * plane;
        detail::gemm(wv.data(), col.data(), ob, Cout, K, plane);
        if (has_bias) {
            const double* bv = bias.value().data();
            for (int64_t c = 0; c < Cout; ++c) {
                double* p = ob + c * plane;
                for (int64_t i = 0; i < plane; ++i) p[i] += bv[c];
            }
        }
    }

    std::vector<Var> parents = has_bias ? std::vector<Var>{x, weight, bias}
                                        : std::vector<Var>{x, weight};
    auto xi = x.impl();
    auto wi = weight.impl();
    auto bi = has_bias ? bias.impl() : nullptr;
    auto backward = [xi, wi, bi, cs, B, Cin, H, W, Cout, kh, kw, Hout, Wout, K,
                     plane](const Tensor& go) {
        std::vector<double> col(static_cast<size_t>(K * plane));
        const bool need_w = true;
        Tensor gw, gx, gb;
        if (need_w) gw = Tensor::zeros(wi->value.shape());
        gx = Tensor::zeros(xi->value.shape());
        if (bi) gb = Tensor::zeros(bi->value.shape());
        std::vector<double> colg(static_cast<size_t>(K * plane));
        for (int64_t b = 0; b < B; ++b) {
            const double* gob = go.data() + b * Cout * plane;
            // dW += dOut * col^T
            detail::im2col(xi->value.data() + b * Cin * H * W, Cin, H, W, kh, kw, cs,
                           Hout, Wout, col.data());
            detail::gemm_bt_acc(gob, col.data(), gw.data(), Cout, plane, K);
            // dX = fold(W^T * dOut)
            detail::gemm_at(wi->value.data(), gob, colg.data(), K, Cout, plane);
            detail::col2im(colg.data(), Cin, H, W, kh, kw, cs, Hout, Wout,
                           gx.data() + b * Cin * H * W);
            if (bi) {
                double* gbd = gb.data();
                for (int64_t c = 0; c < Cout; ++c) {
                    const double* p = gob + c * plane;
                    double acc = 0.0;
                    for (int64_t i = 0; i < plane; ++i) acc += p[i];
                    gbd[c] += acc;
                }
            }
        }
        xi->accumulate(gx);
        wi->accumulate(gw);
        if (bi) bi->accumulate(gb);
    };
    return Var::make(std::move(out), std::move(parents), std::move(backward));
}

inline Var conv2d(const Var& x, const Var& weight, const ConvSpec& cs) {
    return conv2d(x, weight, Var(), cs);
}

/// Max pooling with explicit window/stride/pad (backbone stem uses 3/2/1).
inline Var max_pool2d(const Var& x, int64_t k, int64_t stride, int64_t pad) {
    const Tensor& xv = x.value();
    HCM_CHECK(xv.ndim() == 4, "max_pool2d: expects 4-D input");
    const int64_t B = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    const int64_t Hout = (H + 2 * pad - k) / stride + 1;
    const int64_t Wout = (W + 2 * pad - k) / stride + 1;
    Tensor out({B, C, Hout, Wout});
    auto argmax = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(B * C * Hout * Wout));
    for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c) {
            const double* src = xv.data() + (b * C + c) * H * W;
            double* dst = out.data() + (b * C + c) * Hout * Wout;
            int64_t* am = argmax->data() + (b * C + c) * Hout * Wout;
            for (int64_t oy = 0; oy < Hout; ++oy)
                for (int64_t ox = 0; ox < Wout; ++ox) {
                    double best = -std::numeric_limits<double>::infinity();
                    int64_t best_idx = -1;
                    for (int64_t ky = 0; ky < k; ++ky) {
                        const int64_t iy = oy * stride - pad + ky;
                        if (iy < 0 || iy >= H) continue;
                        for (int64_t kx = 0; kx < k; ++kx) {
                            const int64_t ix = ox * stride - pad + kx;
                            if (ix < 0 || ix >= W) continue;
                            const double v = src[iy * W + ix];
                            if (v > best) {
                                best = v;
                                best_idx = iy * W + ix;
                            }
                        }
                    }
                    dst[oy * Wout + ox] = best;
                    am[oy * Wout + ox] = best_idx;
                }
        }
    auto xi = x.impl();
    auto backward = [xi, argmax, B, C, H, W, Hout, Wout](const Tensor& go) {
        Tensor gx = Tensor::zeros(xi->value.shape());
        for (int64_t bc = 0; bc < B * C; ++bc) {
            double* g = gx.data() + bc * H * W;
            const double* gob = go.data() + bc * Hout * Wout;
            const int64_t* am = argmax->data() + bc * Hout * Wout;
            for (int64_t i = 0; i < Hout * Wout; ++i)
                if (am[i] >= 0) g[am[i]] += gob[i];
        }
        xi->accumulate(gx);
    };
    return Var::make(std::move(out), {x}, std::move(backward));
}

}  // namespace F
}  // namespace hcm

#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "hcm/core/autograd.hpp"
#include "hcm/core/tensor.hpp"

namespace hcm {

namespace detail {

// Broadcast support: rhs must have the same rank and each dim equal to lhs's
// or 1. Returns per-dim strides into rhs with 0 on broadcast dims.
inline std::vector<int64_t> broadcast_strides(const Tensor& lhs, const Tensor& rhs) {
    HCM_CHECK(lhs.ndim() == rhs.ndim(), "broadcast: rank mismatch " + lhs.shape_str() +
                                            " vs " + rhs.shape_str());
    const int64_t nd = lhs.ndim();
    std::vector<int64_t> strides(static_cast<size_t>(nd));
    int64_t s = 1;
    for (int64_t i = nd - 1; i >= 0; --i) {
        const int64_t ld = lhs.dim(i), rd = rhs.dim(i);
        HCM_CHECK(rd == ld || rd == 1, "broadcast: incompatible shapes " + lhs.shape_str() +
                                           " vs " + rhs.shape_str());
        strides[static_cast<size_t>(i)] = (rd == 1) ? 0 : s;
        s *= rd;
    }
    return strides;
}

template <typename Fn>
inline void for_each_broadcast(const Tensor& lhs, const Tensor& rhs, Fn&& fn) {
    const auto rs = broadcast_strides(lhs, rhs);
    const int64_t nd = lhs.ndim();
    std::vector<int64_t> idx(static_cast<size_t>(nd), 0);
    const int64_t n = lhs.numel();
    int64_t roff = 0;
    for (int64_t i = 0; i < n; ++i) {
        fn(i, roff);
        for (int64_t d = nd - 1; d >= 0; --d) {
            idx[static_cast<size_t>(d)]++;
            roff += rs[static_cast<size_t>(d)];
            if (idx[static_cast<size_t>(d)] < lhs.dim(d)) break;
            roff -= rs[static_cast<size_t>(d)] * lhs.dim(d);
            idx[static_cast<size_t>(d)] = 0;
        }
    }
}

}  // namespace detail

namespace F {

inline Var relu(const Var& x) {
    Tensor out = x.value().clone();
    double* d = out.data();
    for (int64_t i = 0; i < out.numel(); ++i)
        if (d[i] < 0) d[i] = 0;
    auto xi = x.impl();
    auto backward = [xi](const Tensor& go) {
        Tensor gx = go.clone();
        const double* v = xi->value.data();
        double* g = gx.data();
        for (int64_t i = 0; i < gx.numel(); ++i)
            if (v[i] <= 0) g[i] = 0;
        xi->accumulate(gx);
    };
    return Var::make(std::move(out), {x}, std::move(backward));
}

inline Var leaky_relu(const Var& x, double slope = 0.01) {
    Tensor out = x.value().clone();
    double* d = out.data();
    for (int64_t i = 0; i < out.numel(); ++i)
        if (d[i] < 0) d[i] *= slope;
    auto xi = x.impl();
    auto backward = [xi, slope](const Tensor& go) {
        Tensor gx = go.clone();
        const double* v = xi->value.data();
        double* g = gx.data();
        for (int64_t i = 0; i < gx.numel(); ++i)
            if (v[i] <= 0) g[i] *= slope;
        xi->accumulate(gx);
    };
    return Var::make(std::move(out), {x}, std::move(backward));
}

inline Var sigmoid(const Var& x) {
    Tensor out(x.value().shape());
    const double* v = x.value().data();
    double* d = out.data();
    for (int64_t i = 0; i < out.numel(); ++i) d[i] = 1.0 / (1.0 + std::exp(-v[i]));
    auto xi = x.impl();
    Tensor saved = out;  // shares storage
    auto backward = [xi, saved](const Tensor& go) {
        Tensor gx(go.shape());
        const double* s = saved.data();
        const double* g = go.data();
        double* o = gx.data();
        for (int64_t i = 0; i < gx.numel(); ++i) o[i] = g[i] * s[i] * (1.0 - s[i]);
        xi->accumulate(gx);
    };
    return Var::make(std::move(out), {x}, std::move(backward));
}

/// a + b. b may broadcast over singleton dims.
inline Var add(const Var& a, const Var& b) {
    Tensor out = a.value().clone();
    if (a.value().same_shape(b.value())) {
        out.add_(b.value());
    } else {
        double* d = out.data();
        const double* bv = b.value().data();
        detail::for_each_broadcast(a.value(), b.value(),
                                   [&](int64_t i, int64_t j) { d[i] += bv[j]; });
    }
    auto ai = a.impl();
    auto bi = b.impl();
    auto backward = [ai, bi](const Tensor& go) {
        ai->accumulate(go);
        if (bi->value.same_shape(go)) {
            bi->accumulate(go);
        } else {
            Tensor gb = Tensor::zeros(bi->value.shape());
            double* g = gb.data();
            const double* go_d = go.data();
            detail::for_each_broadcast(go, bi->value,
                                       [&](int64_t i, int64_t j) { g[j] += go_d[i]; });
            bi->accumulate(gb);
        }
    };
    return Var::make(std::move(out), {a, b}, std::move(backward));
}

/// a * b elementwise. b may broadcast over singleton dims.
inline Var mul(const Var& a, const Var& b) {
    Tensor out = a.value().clone();
    double* d = out.data();
    const double* bv = b.value().data();
    if (a.value().same_shape(b.value())) {
        for (int64_t i = 0; i < out.numel(); ++i) d[i] *= bv[i];
    } else {
        detail::for_each_broadcast(a.value(), b.value(),
                                   [&](int64_t i, int64_t j) { d[i] *= bv[j]; });
    }
    auto ai = a.impl();
    auto bi = b.impl();
    auto backward = [ai, bi](const Tensor& go) {
        const double* go_d = go.data();
        Tensor ga(ai->value.shape());
        double* gad = ga.data();
        const double* bvd = bi->value.data();
        Tensor gb = Tensor::zeros(bi->value.shape());
        double* gbd = gb.data();
        const double* avd = ai->value.data();
        if (ai->value.same_shape(bi->value)) {
            for (int64_t i = 0; i < go.numel(); ++i) {
                gad[i] = go_d[i] * bvd[i];
                gbd[i] += go_d[i] * avd[i];
            }
        } else {
            detail::for_each_broadcast(go, bi->value, [&](int64_t i, int64_t j) {
                gad[i] = go_d[i] * bvd[j];
                gbd[j] += go_d[i] * avd[i];
            });
        }
        ai->accumulate(ga);
        bi->accumulate(gb);
    };
    return Var::make(std::move(out), {a, b}, std::move(backward));
}

/// 1 - x (the reversal used by reverse attention).
inline Var one_minus(const Var& x) {
    Tensor out(x.value().shape());
    const double* v = x.value().data();
    double* d = out.data();
    for (int64_t i = 0; i < out.numel(); ++i) d[i] = 1.0 - v[i];
    auto xi = x.impl();
    auto backward = [xi](const Tensor& go) {
        Tensor gx = go.clone();
        gx.scale_(-1.0);
        xi->accumulate(gx);
    };
    return Var::make(std::move(out), {x}, std::move(backward));
}

inline Var scale(const Var& x, double s) {
    Tensor out = x.value().clone();
    out.scale_(s);
    auto xi = x.impl();
    auto backward = [xi, s](const Tensor& go) {
        Tensor gx = go.clone();
        gx.scale_(s);
        xi->accumulate(gx);
    };
    return Var::make(std::move(out), {x}, std::move(backward));
}

/// Concatenation along the channel dim of NCHW tensors.
inline Var concat_channels(const std::vector<Var>& xs) {
    HCM_CHECK(!xs.empty(), "concat_channels: empty input");
    const Tensor& first = xs[0].value();
    HCM_CHECK(first.ndim() == 4, "concat_channels: expects 4-D inputs");
    const int64_t B = first.dim(0), H = first.dim(2), W = first.dim(3);
    int64_t Ctot = 0;
    for (const Var& v : xs) {
        HCM_CHECK(v.value().dim(0) == B && v.value().dim(2) == H && v.value().dim(3) == W,
                  "concat_channels: spatial/batch mismatch");
        Ctot += v.value().dim(1);
    }
    Tensor out({B, Ctot, H, W});
    const int64_t plane = H * W;
    int64_t coff = 0;
    for (const Var& v : xs) {
        const int64_t C = v.value().dim(1);
        for (int64_t b = 0; b < B; ++b)
            std::memcpy(out.data() + (b * Ctot + coff) * plane,
                        v.value().data() + b * C * plane,
                        static_cast<size_t>(C * plane) * sizeof(double));
        coff += C;
    }
    std::vector<std::shared_ptr<detail::VarImpl>> impls;
    for (const Var& v : xs) impls.push_back(v.impl());
    auto backward = [impls, B, Ctot, plane](const Tensor& go) {
        int64_t coff = 0;
        for (const auto& xi : impls) {
            const int64_t C = xi->value.dim(1);
            Tensor gx(xi->value.shape());
            for (int64_t b = 0; b < B; ++b)
                std::memcpy(gx.data() + b * C * plane,
                            go.data() + (b * Ctot + coff) * plane,
                            static_cast<size_t>(C * plane) * sizeof(double));
            xi->accumulate(gx);
            coff += C;
        }
    };
    return Var::make(std::move(out), xs, std::move(backward));
}

namespace detail_bilinear {

struct Taps {
    int64_t lo, hi;
    double w_hi;
};

inline Taps taps(int64_t o, int64_t in_size, double scale) {
    // Half-pixel mapping, corners not aligned.
    double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    int64_t lo = static_cast<int64_t>(src);
    if (lo > in_size - 1) lo = in_size - 1;
    int64_t hi = std::min<int64_t>(lo + 1, in_size - 1);
    return {lo, hi, src - static_cast<double>(lo)};
}

}  // namespace detail_bilinear

/// Bilinear resize to (oh, ow), corners not aligned. Identity when the sizes
/// already match.
inline Var upsample_bilinear(const Var& x, int64_t oh, int64_t ow) {
    const Tensor& xv = x.value();
    HCM_CHECK(xv.ndim() == 4, "upsample_bilinear: expects 4-D input");
    const int64_t B = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    if (oh == H && ow == W) {
        // Still builds a pass-through graph node.
        Tensor out = xv.clone();
        auto xi = x.impl();
        auto backward = [xi](const Tensor& go) { xi->accumulate(go); };
        return Var::make(std::move(out), {x}, std::move(backward));
    }
    const double sy = static_cast<double>(H) / static_cast<double>(oh);
    const double sx = static_cast<double>(W) / static_cast<double>(ow);
    auto ytaps = std::make_shared<std::vector<detail_bilinear::Taps>>();
    auto xtaps = std::make_shared<std::vector<detail_bilinear::Taps>>();
    ytaps->reserve(static_cast<size_t>(oh));
    xtaps->reserve(static_cast<size_t>(ow));
    for (int64_t i = 0; i < oh; ++i) ytaps->push_back(detail_bilinear::taps(i, H, sy));
    for (int64_t i = 0; i < ow; ++i) xtaps->push_back(detail_bilinear::taps(i, W, sx));
    Tensor out({B, C, oh, ow});
    for (int64_t bc = 0; bc < B * C; ++bc) {
        const double* src = xv.data() + bc * H * W;
        double* dst = out.data() + bc * oh * ow;
        for (int64_t oy = 0; oy < oh; ++oy) {
            const auto& ty = (*ytaps)[static_cast<size_t>(oy)];
            for (int64_t ox = 0; ox < ow; ++ox) {
                const auto& tx = (*xtaps)[static_cast<size_t>(ox)];
                const double top = src[ty.lo * W + tx.lo] * (1 - tx.w_hi) +
                                   src[ty.lo * W + tx.hi] * tx.w_hi;
                const double bot = src[ty.hi * W + tx.lo] * (1 - tx.w_hi) +
                                   src[ty.hi * W + tx.hi] * tx.w_hi;
                dst[oy * ow + ox] = top * (1 - ty.w_hi) + bot * ty.w_hi;
            }
        }
    }
    auto xi = x.impl();
    auto backward = [xi, ytaps, xtaps, B, C, H, W, oh, ow](const Tensor& go) {
        Tensor gx = Tensor::zeros(xi->value.shape());
        for (int64_t bc = 0; bc < B * C; ++bc) {
            double* g = gx.data() + bc * H * W;
            const double* god = go.data() + bc * oh * ow;
            for (int64_t oy = 0; oy < oh; ++oy) {
                const auto& ty = (*ytaps)[static_cast<size_t>(oy)];
                for (int64_t ox = 0; ox < ow; ++ox) {
                    const auto& tx = (*xtaps)[static_cast<size_t>(ox)];
                    const double v = god[oy * ow + ox];
                    g[ty.lo * W + tx.lo] += v * (1 - ty.w_hi) * (1 - tx.w_hi);
                    g[ty.lo * W + tx.hi] += v * (1 - ty.w_hi) * tx.w_hi;
                    g[ty.hi * W + tx.lo] += v * ty.w_hi * (1 - tx.w_hi);
                    g[ty.hi * W + tx.hi] += v * ty.w_hi * tx.w_hi;
                }
            }
        }
        xi->accumulate(gx);
    };
    return Var::make(std::move(out), {x}, std::move(backward));
}

/// Spatial mean per channel -> B x C x 1 x 1.
inline Var global_avg_pool(const Var& x) {
    const Tensor& xv = x.value();
    const int64_t B = xv.dim(0), C = xv.dim(1), plane = xv.dim(2) * xv.dim(3);
    Tensor out({B, C, 1, 1});
    for (int64_t bc = 0; bc < B * C; ++bc) {
        const double* src = xv.data() + bc * plane;
        double acc = 0.0;
        for (int64_t i = 0; i < plane; ++i) acc += src[i];
        out[bc] = acc / static_cast<double>(plane);
    }
    auto xi = x.impl();
    auto backward = [xi, B, C, plane](const Tensor& go) {
        Tensor gx(xi->value.shape());
        for (int64_t bc = 0; bc < B * C; ++bc) {
            const double v = go[bc] / static_cast<double>(plane);
            double* g = gx.data() + bc * plane;
            for (int64_t i = 0; i < plane; ++i) g[i] = v;
        }
        xi->accumulate(gx);
    };
    return Var::make(std::move(out), {x}, std::move(backward));
}

/// Mean over the channel dim -> B x 1 x H x W.
inline Var channel_mean(const Var& x) {
    const Tensor& xv = x.value();
    const int64_t B = xv.dim(0), C = xv.dim(1), plane = xv.dim(2) * xv.dim(3);
    Tensor out({B, 1, xv.dim(2), xv.dim(3)});
    for (int64_t b = 0; b < B; ++b) {
        double* dst = out.data() + b * plane;
        std::fill(dst, dst + plane, 0.0);
        for (int64_t c = 0; c < C; ++c) {
            const double* src = xv.data() + (b * C + c) * plane;
            for (int64_t i = 0; i < plane; ++i) dst[i] += src[i];
        }
        for (int64_t i = 0; i < plane; ++i) dst[i] /= static_cast<double>(C);
    }
    auto xi = x.impl();
    auto backward = [xi, B, C, plane](const Tensor& go) {
        Tensor gx(xi->value.shape());
        for (int64_t b = 0; b < B; ++b) {
            const double* god = go.data() + b * plane;
            for (int64_t c = 0; c < C; ++c) {
                double* g = gx.data() + (b * C + c) * plane;
                for (int64_t i = 0; i < plane; ++i) g[i] = god[i] / static_cast<double>(C);
            }
        }
        xi->accumulate(gx);
    };
    return Var::make(std::move(out), {x}, std::move(backward));
}

/// Max over the channel dim -> B x 1 x H x W.
inline Var channel_max(const Var& x) {
    const Tensor& xv = x.value();
    const int64_t B = xv.dim(0), C = xv.dim(1), plane = xv.dim(2) * xv.dim(3);
    Tensor out({B, 1, xv.dim(2), xv.dim(3)});
    auto argmax = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(B * plane));
    for (int64_t b = 0; b < B; ++b) {
        double* dst = out.data() + b * plane;
        int64_t* am = argmax->data() + b * plane;
        for (int64_t i = 0; i < plane; ++i) {
            double best = -std::numeric_limits<double>::infinity();
            int64_t bc = 0;
            for (int64_t c = 0; c < C; ++c) {
                const double v = xv.data()[(b * C + c) * plane + i];
                if (v > best) {
                    best = v;
                    bc = c;
                }
            }
            dst[i] = best;
            am[i] = bc;
        }
    }
    auto xi = x.impl();
    auto backward = [xi, argmax, B, C, plane](const Tensor& go) {
        Tensor gx = Tensor::zeros(xi->value.shape());
        for (int64_t b = 0; b < B; ++b) {
            const double* god = go.data() + b * plane;
            const int64_t* am = argmax->data() + b * plane;
            for (int64_t i = 0; i < plane; ++i)
                gx.data()[(b * C + am[i]) * plane + i] += god[i];
        }
        xi->accumulate(gx);
    };
    return Var::make(std::move(out), {x}, std::move(backward));
}

/// Per-position normalization across channels: zero mean, unit variance at
/// every (b, y, x), population statistics, no learnable affine.
inline Var position_norm(const Var& x, double eps = 1e-5) {
    const Tensor& xv = x.value();
    HCM_CHECK(xv.ndim() == 4 && xv.dim(1) >= 2, "position_norm: needs 4-D input with C >= 2");
    const int64_t B = xv.dim(0), C = xv.dim(1), plane = xv.dim(2) * xv.dim(3);
    Tensor out(xv.shape());
    Tensor xhat(xv.shape());
    Tensor inv_std({B, 1, xv.dim(2), xv.dim(3)});
    for (int64_t b = 0; b < B; ++b) {
        for (int64_t i = 0; i < plane; ++i) {
            double mean = 0.0;
            for (int64_t c = 0; c < C; ++c) mean += xv.data()[(b * C + c) * plane + i];
            mean /= static_cast<double>(C);
            double var = 0.0;
            for (int64_t c = 0; c < C; ++c) {
                const double d = xv.data()[(b * C + c) * plane + i] - mean;
                var += d * d;
            }
            var /= static_cast<double>(C);
            const double is = 1.0 / std::sqrt(var + eps);
            inv_std.data()[b * plane + i] = is;
            for (int64_t c = 0; c < C; ++c) {
                const int64_t k = (b * C + c) * plane + i;
                xhat.data()[k] = (xv.data()[k] - mean) * is;
                out.data()[k] = xhat.data()[k];
            }
        }
    }
    auto xi = x.impl();
    auto backward = [xi, xhat, inv_std, B, C, plane](const Tensor& go) {
        Tensor gx(xi->value.shape());
        for (int64_t b = 0; b < B; ++b) {
            for (int64_t i = 0; i < plane; ++i) {
                double gmean = 0.0, gdot = 0.0;
                for (int64_t c = 0; c < C; ++c) {
                    const int64_t k = (b * C + c) * plane + i;
                    gmean += go.data()[k];
                    gdot += go.data()[k] * xhat.data()[k];
                }
                gmean /= static_cast<double>(C);
                gdot /= static_cast<double>(C);
                const double is = inv_std.data()[b * plane + i];
                for (int64_t c = 0; c < C; ++c) {
                    const int64_t k = (b * C + c) * plane + i;
                    gx.data()[k] = is * (go.data()[k] - gmean - xhat.data()[k] * gdot);
                }
            }
        }
        xi->accumulate(gx);
    };
    return Var::make(std::move(out), {x}, std::move(backward));
}

/// Spatial batch normalization. Buffers are updated in place when training.
inline Var batch_norm2d(const Var& x, const Var& gamma, const Var& beta,
                        Tensor running_mean, Tensor running_var, bool training,
                        double momentum = 0.1, double eps = 1e-5) {
    const Tensor& xv = x.value();
    HCM_CHECK(xv.ndim() == 4, "batch_norm2d: expects 4-D input");
    const int64_t B = xv.dim(0), C = xv.dim(1), plane = xv.dim(2) * xv.dim(3);
    const int64_t n = B * plane;
    Tensor out(xv.shape());
    const double* g = gamma.value().data();
    const double* bt = beta.value().data();

    if (!training) {
        Tensor scale({C}), shift({C});
        for (int64_t c = 0; c < C; ++c) {
            const double is = 1.0 / std::sqrt(running_var[c] + eps);
            scale[c] = g[c] * is;
            shift[c] = bt[c] - running_mean[c] * scale[c];
        }
        for (int64_t b = 0; b < B; ++b)
            for (int64_t c = 0; c < C; ++c) {
                const double* src = xv.data() + (b * C + c) * plane;
                double* dst = out.data() + (b * C + c) * plane;
                for (int64_t i = 0; i < plane; ++i) dst[i] = src[i] * scale[c] + shift[c];
            }
        auto xi = x.impl();
        auto gi = gamma.impl();
        auto bi = beta.impl();
        Tensor rm = running_mean, rv = running_var;
        auto backward = [xi, gi, bi, rm, rv, eps, B, C, plane](const Tensor& go) {
            Tensor gx(xi->value.shape());
            Tensor gg = Tensor::zeros({C}), gb = Tensor::zeros({C});
            for (int64_t c = 0; c < C; ++c) {
                const double is = 1.0 / std::sqrt(rv[c] + eps);
                const double sc = gi->value[c] * is;
                double dg = 0.0, db = 0.0;
                for (int64_t b = 0; b < B; ++b) {
                    const int64_t off = (b * C + c) * plane;
                    for (int64_t i = 0; i < plane; ++i) {
                        const double gd = go.data()[off + i];
                        gx.data()[off + i] = gd * sc;
                        dg += gd * (xi->value.data()[off + i] - rm[c]) * is;
                        db += gd;
                    }
                }
                gg[c] = dg;
                gb[c] = db;
            }
            xi->accumulate(gx);
            gi->accumulate(gg);
            bi->accumulate(gb);
        };
        return Var::make(std::move(out), {x, gamma, beta}, std::move(backward));
    }

    Tensor mean({C}), var({C});
    for (int64_t c = 0; c < C; ++c) {
        double acc = 0.0;
        for (int64_t b = 0; b < B; ++b) {
            const double* src = xv.data() + (b * C + c) * plane;
            for (int64_t i = 0; i < plane; ++i) acc += src[i];
        }
        const double mu = acc / static_cast<double>(n);
        double vacc = 0.0;
        for (int64_t b = 0; b < B; ++b) {
            const double* src = xv.data() + (b * C + c) * plane;
            for (int64_t i = 0; i < plane; ++i) {
                const double d = src[i] - mu;
                vacc += d * d;
            }
        }
        mean[c] = mu;
        var[c] = vacc / static_cast<double>(n);
        const double unbiased = n > 1 ? vacc / static_cast<double>(n - 1) : var[c];
        running_mean[c] = (1.0 - momentum) * running_mean[c] + momentum * mu;
        running_var[c] = (1.0 - momentum) * running_var[c] + momentum * unbiased;
    }

    Tensor xhat(xv.shape());
    for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c) {
            const double is = 1.0 / std::sqrt(var[c] + eps);
            const double* src = xv.data() + (b * C + c) * plane;
            double* xh = xhat.data() + (b * C + c) * plane;
            double* dst = out.data() + (b * C + c) * plane;
            for (int64_t i = 0; i < plane; ++i) {
                xh[i] = (src[i] - mean[c]) * is;
                dst[i] = g[c] * xh[i] + bt[c];
            }
        }

    auto xi = x.impl();
    auto gi = gamma.impl();
    auto bi = beta.impl();
    auto backward = [xi, gi, bi, xhat, var, eps, B, C, plane, n](const Tensor& go) {
        Tensor gx(xi->value.shape());
        Tensor gg = Tensor::zeros({C}), gb = Tensor::zeros({C});
        for (int64_t c = 0; c < C; ++c) {
            double sum_g = 0.0, sum_gx = 0.0;
            for (int64_t b = 0; b < B; ++b) {
                const int64_t off = (b * C + c) * plane;
                for (int64_t i = 0; i < plane; ++i) {
                    sum_g += go.data()[off + i];
                    sum_gx += go.data()[off + i] * xhat.data()[off + i];
                }
            }
            gg[c] = sum_gx;
            gb[c] = sum_g;
            const double is = 1.0 / std::sqrt(var[c] + eps);
            const double k = gi->value[c] * is;
            const double mg = sum_g / static_cast<double>(n);
            const double mgx = sum_gx / static_cast<double>(n);
            for (int64_t b = 0; b < B; ++b) {
                const int64_t off = (b * C + c) * plane;
                for (int64_t i = 0; i < plane; ++i)
                    gx.data()[off + i] =
                        k * (go.data()[off + i] - mg - xhat.data()[off + i] * mgx);
            }
        }
        xi->accumulate(gx);
        gi->accumulate(gg);
        bi->accumulate(gb);
    };
    return Var::make(std::move(out), {x, gamma, beta}, std::move(backward));
}

inline Var sum(const Var& x) {
    Tensor out = Tensor::scalar(x.value().sum());
    auto xi = x.impl();
    auto backward = [xi](const Tensor& go) {
        Tensor gx = Tensor::full(xi->value.shape(), go[0]);
        xi->accumulate(gx);
    };
    return Var::make(std::move(out), {x}, std::move(backward));
}

/// sum(x * r) for a constant tensor r; handy for scalarizing in tests.
inline Var inner(const Var& x, const Tensor& r) {
    HCM_CHECK(x.value().numel() == r.numel(), "inner: size mismatch");
    double acc = 0.0;
    for (int64_t i = 0; i < r.numel(); ++i) acc += x.value()[i] * r[i];
    auto xi = x.impl();
    Tensor rc = r;
    auto backward = [xi, rc](const Tensor& go) {
        Tensor gx = rc.clone();
        gx.scale_(go[0]);
        xi->accumulate(gx);
    };
    return Var::make(Tensor::scalar(acc), {x}, std::move(backward));
}

}  // namespace F

// ---- Plain tensor utilities (no autodiff; used on targets and score maps) --

/// Bilinear resize of a 4-D tensor (no graph).
inline Tensor bilinear_resize(const Tensor& x, int64_t oh, int64_t ow) {
    NoGradGuard ng;
    return F::upsample_bilinear(Var(x), oh, ow).value();
}

/// Nearest-neighbour resize of a 4-D tensor.
inline Tensor nearest_resize(const Tensor& x, int64_t oh, int64_t ow) {
    const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (oh == H && ow == W) return x.clone();
    Tensor out({B, C, oh, ow});
    const double sy = static_cast<double>(H) / static_cast<double>(oh);
    const double sx = static_cast<double>(W) / static_cast<double>(ow);
    std::vector<int64_t> ys(static_cast<size_t>(oh)), xs(static_cast<size_t>(ow));
    for (int64_t i = 0; i < oh; ++i)
        ys[static_cast<size_t>(i)] =
            std::min<int64_t>(static_cast<int64_t>(static_cast<double>(i) * sy), H - 1);
    for (int64_t i = 0; i < ow; ++i)
        xs[static_cast<size_t>(i)] =
            std::min<int64_t>(static_cast<int64_t>(static_cast<double>(i) * sx), W - 1);
    for (int64_t bc = 0; bc < B * C; ++bc) {
        const double* src = x.data() + bc * H * W;
        double* dst = out.data() + bc * oh * ow;
        for (int64_t oy = 0; oy < oh; ++oy)
            for (int64_t ox = 0; ox < ow; ++ox)
                dst[oy * ow + ox] =
                    src[ys[static_cast<size_t>(oy)] * W + xs[static_cast<size_t>(ox)]];
    }
    return out;
}

/// Mean filter with stride 1 and same padding; the divisor counts only
/// in-image pixels, so constant inputs stay constant at the borders.
inline Tensor avg_pool_same(const Tensor& x, int64_t k) {
    const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t r = k / 2;
    Tensor out(x.shape());
    for (int64_t bc = 0; bc < B * C; ++bc) {
        const double* src = x.data() + bc * H * W;
        double* dst = out.data() + bc * H * W;
        // Row-prefix sums make the window sum O(1) per pixel.
        std::vector<double> integ(static_cast<size_t>((H + 1) * (W + 1)), 0.0);
        for (int64_t y = 0; y < H; ++y)
            for (int64_t x2 = 0; x2 < W; ++x2)
                integ[static_cast<size_t>((y + 1) * (W + 1) + x2 + 1)] =
                    src[y * W + x2] + integ[static_cast<size_t>(y * (W + 1) + x2 + 1)] +
                    integ[static_cast<size_t>((y + 1) * (W + 1) + x2)] -
                    integ[static_cast<size_t>(y * (W + 1) + x2)];
        for (int64_t y = 0; y < H; ++y) {
            const int64_t y0 = std::max<int64_t>(0, y - r), y1 = std::min<int64_t>(H - 1, y + r);
            for (int64_t x2 = 0; x2 < W; ++x2) {
                const int64_t x0 = std::max<int64_t>(0, x2 - r),
                              x1 = std::min<int64_t>(W - 1, x2 + r);
                const double s = integ[static_cast<size_t>((y1 + 1) * (W + 1) + x1 + 1)] -
                                 integ[static_cast<size_t>(y0 * (W + 1) + x1 + 1)] -
                                 integ[static_cast<size_t>((y1 + 1) * (W + 1) + x0)] +
                                 integ[static_cast<size_t>(y0 * (W + 1) + x0)];
                dst[y * W + x2] = s / static_cast<double>((y1 - y0 + 1) * (x1 - x0 + 1));
            }
        }
    }
    return out;
}

inline Tensor sigmoid_map(const Tensor& x) {
    Tensor out(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) out[i] = 1.0 / (1.0 + std::exp(-x[i]));
    return out;
}

inline Tensor clamp01(const Tensor& x) {
    Tensor out = x.clone();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::min(1.0, std::max(0.0, out[i]));
    return out;
}

}  // namespace hcm

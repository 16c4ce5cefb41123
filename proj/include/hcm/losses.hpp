#pragma once

#include <array>
#include <cmath>

#include "hcm/core/ops.hpp"
#include "hcm/model/rrd.hpp"

namespace hcm::losses {

namespace detail {

inline double softplus(double z) {
    return std::max(z, 0.0) + std::log1p(std::exp(-std::fabs(z)));
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

/// Resizes targets to the prediction's resolution: masks travel by nearest
/// neighbour and are re-binarized, weight maps travel bilinearly.
inline void align_targets(const Tensor& p, Tensor& y, Tensor& w) {
    const int64_t h = p.dim(2), wd = p.dim(3);
    if (y.dim(2) != h || y.dim(3) != wd) {
        y = nearest_resize(y, h, wd);
        for (int64_t i = 0; i < y.numel(); ++i) y[i] = y[i] > 0.5 ? 1.0 : 0.0;
    }
    if (w.dim(2) != h || w.dim(3) != wd) w = bilinear_resize(w, h, wd);
    HCM_CHECK(y.same_shape(p) && w.same_shape(p),
              "loss targets do not align with prediction " + p.shape_str());
}

}  // namespace detail

/// Boundary-emphasis map: w = 1 + 5 * |mean_31x31(y) - y|. Ones away from
/// mask boundaries, up to 6 on thin structures.
inline Tensor boundary_weights(const Tensor& y) {
    Tensor pooled = avg_pool_same(y, 31);
    Tensor w(y.shape());
    for (int64_t i = 0; i < y.numel(); ++i) w[i] = 1.0 + 5.0 * std::fabs(pooled[i] - y[i]);
    return w;
}

/// Weighted binary cross-entropy on logits, normalized by the weight mass.
/// y and w may be at a different resolution; they are aligned internally.
inline Var weighted_bce(const Var& p, Tensor y, Tensor w) {
    const Tensor& pv = p.value();
    detail::align_targets(pv, y, w);
    double wsum = 0.0, acc = 0.0;
    for (int64_t i = 0; i < pv.numel(); ++i) {
        const double term = y[i] * detail::softplus(-pv[i]) + (1.0 - y[i]) * detail::softplus(pv[i]);
        acc += w[i] * term;
        wsum += w[i];
    }
    const double loss = acc / wsum;
    auto pi = p.impl();
    auto backward = [pi, y, w, wsum](const Tensor& go) {
        Tensor g(pi->value.shape());
        const double scale = go[0] / wsum;
        for (int64_t i = 0; i < g.numel(); ++i)
            g[i] = scale * w[i] * (detail::sigmoid(pi->value[i]) - y[i]);
        pi->accumulate(g);
    };
    return Var::make(Tensor::scalar(loss), {p}, std::move(backward));
}

/// Weighted soft-IoU loss on logits with +1 smoothing on both sides of the
/// ratio. Always in [0, 1).
inline Var weighted_iou(const Var& p, Tensor y, Tensor w) {
    const Tensor& pv = p.value();
    detail::align_targets(pv, y, w);
    double inter = 0.0, uni = 0.0;
    Tensor q(pv.shape());
    for (int64_t i = 0; i < pv.numel(); ++i) {
        q[i] = detail::sigmoid(pv[i]);
        inter += w[i] * q[i] * y[i];
        uni += w[i] * (q[i] + y[i] - q[i] * y[i]);
    }
    const double loss = 1.0 - (inter + 1.0) / (uni + 1.0);
    auto pi = p.impl();
    auto backward = [pi, y, w, q, inter, uni](const Tensor& go) {
        Tensor g(pi->value.shape());
        const double u1 = uni + 1.0;
        for (int64_t i = 0; i < g.numel(); ++i) {
            const double dq = -(w[i] * y[i] * u1 - (inter + 1.0) * w[i] * (1.0 - y[i])) / (u1 * u1);
            g[i] = go[0] * dq * q[i] * (1.0 - q[i]);
        }
        pi->accumulate(g);
    };
    return Var::make(Tensor::scalar(loss), {p}, std::move(backward));
}

struct LevelLoss {
    double bce = 0.0;
    double iou = 0.0;
    double weight = 0.0;  // the 2^-(s-1) scale factor
    double weighted() const { return weight * (bce + iou); }
};

struct TotalLoss {
    Var total;                        // scalar, differentiable
    std::array<LevelLoss, 5> levels;  // index 0 = finest stage
    double value() const { return total.item(); }
};

/// Deep-supervision objective: sum over the five stages of
/// 2^-(s-1) * (weighted BCE + weighted IoU) against the full-resolution mask.
inline TotalLoss total_loss(const PredictionPyramid& preds, const Tensor& y) {
    for (const Var& p : preds.p)
        HCM_CHECK(p.value().defined(), "total_loss: missing pyramid level");
    Tensor w = boundary_weights(y);
    TotalLoss out;
    for (int s = 0; s < 5; ++s) {
        const double scale = std::pow(0.5, s);
        Var bce = weighted_bce(preds.p[static_cast<size_t>(s)], y, w);
        Var iou = weighted_iou(preds.p[static_cast<size_t>(s)], y, w);
        out.levels[static_cast<size_t>(s)] = {bce.item(), iou.item(), scale};
        Var term = F::scale(F::add(bce, iou), scale);
        out.total = (s == 0) ? term : F::add(out.total, term);
    }
    return out;
}

}  // namespace hcm::losses

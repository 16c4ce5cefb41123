#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "hcm/core/tensor.hpp"

namespace hcm::metrics {

inline constexpr double kEps = 2.220446049250313e-16;

// Binarization rule used for every thresholded metric: a pixel is foreground
// when its score reaches the threshold, and zero scores never count as
// detections (so an all-zero map predicts nothing even at threshold 0).
inline bool fg_at(double v, double t) { return v >= t && v > 0.0; }

namespace detail {

inline void check_pair(const Tensor& s, const Tensor& y) {
    HCM_CHECK(s.ndim() == 2 && y.ndim() == 2, "metrics: expect 2-D maps");
    HCM_CHECK(s.same_shape(y), "metrics: size mismatch " + s.shape_str() + " vs " + y.shape_str());
}

/// Exact Euclidean distance transform: for every pixel, the distance to the
/// nearest foreground pixel of `fg` and that pixel's linear index. Two-pass
/// lower-envelope-of-parabolas, O(H*W).
inline void edt_nearest(const std::vector<uint8_t>& fg, int64_t H, int64_t W,
                        std::vector<double>& dist, std::vector<int64_t>& nearest) {
    const double kInf = std::numeric_limits<double>::infinity();
    dist.assign(static_cast<size_t>(H * W), kInf);
    nearest.assign(static_cast<size_t>(H * W), -1);

    // Column pass: squared distance to the nearest foreground row per column.
    std::vector<double> dcol(static_cast<size_t>(H * W), kInf);
    std::vector<int64_t> srow(static_cast<size_t>(H * W), -1);
    std::vector<int64_t> sites;
    for (int64_t x = 0; x < W; ++x) {
        sites.clear();
        for (int64_t y = 0; y < H; ++y)
            if (fg[static_cast<size_t>(y * W + x)]) sites.push_back(y);
        if (sites.empty()) continue;
        size_t k = 0;
        for (int64_t y = 0; y < H; ++y) {
            // Strict comparison: equidistant rows resolve to the smaller one.
            while (k + 1 < sites.size() &&
                   std::llabs(sites[k + 1] - y) < std::llabs(sites[k] - y))
                ++k;
            const int64_t r = sites[k];
            dcol[static_cast<size_t>(y * W + x)] = static_cast<double>((y - r) * (y - r));
            srow[static_cast<size_t>(y * W + x)] = r;
        }
    }

    // Row pass: 1-D squared-distance transform over x with additive costs.
    std::vector<int64_t> v(static_cast<size_t>(W));
    std::vector<double> z(static_cast<size_t>(W + 1));
    for (int64_t y = 0; y < H; ++y) {
        const double* f = dcol.data() + y * W;
        // Collect finite parabola sites.
        int64_t m = 0;
        std::vector<int64_t> xs;
        xs.reserve(static_cast<size_t>(W));
        for (int64_t x = 0; x < W; ++x)
            if (std::isfinite(f[x])) xs.push_back(x);
        if (xs.empty()) continue;
        int64_t k = 0;
        v[0] = xs[0];
        z[0] = -kInf;
        z[1] = kInf;
        for (size_t qi = 1; qi < xs.size(); ++qi) {
            const int64_t q = xs[qi];
            double s = 0;
            while (true) {
                const int64_t p = v[static_cast<size_t>(k)];
                s = ((f[q] + static_cast<double>(q * q)) -
                     (f[p] + static_cast<double>(p * p))) /
                    static_cast<double>(2 * q - 2 * p);
                if (s <= z[static_cast<size_t>(k)]) {
                    --k;
                } else {
                    break;
                }
            }
            ++k;
            v[static_cast<size_t>(k)] = q;
            z[static_cast<size_t>(k)] = s;
            z[static_cast<size_t>(k + 1)] = kInf;
        }
        k = 0;
        (void)m;
        for (int64_t x = 0; x < W; ++x) {
            while (z[static_cast<size_t>(k + 1)] < static_cast<double>(x)) ++k;
            const int64_t p = v[static_cast<size_t>(k)];
            const double d2 = static_cast<double>((x - p) * (x - p)) + f[p];
            dist[static_cast<size_t>(y * W + x)] = std::sqrt(d2);
            nearest[static_cast<size_t>(y * W + x)] =
                srow[static_cast<size_t>(y * W + p)] * W + p;
        }
    }
}

/// 7x7 Gaussian (sigma 5) smoothing. The window is renormalized by its
/// in-image mass, so a constant field stays constant up to the borders (a
/// constant all-wrong error map must yield zero weighted recall).
inline std::vector<double> gauss7_filter(const std::vector<double>& img, int64_t H, int64_t W) {
    constexpr int64_t R = 3;
    static const std::vector<double> kernel = [] {
        std::vector<double> k(49);
        for (int64_t dy = -R; dy <= R; ++dy)
            for (int64_t dx = -R; dx <= R; ++dx)
                k[static_cast<size_t>((dy + R) * 7 + dx + R)] =
                    std::exp(-static_cast<double>(dy * dy + dx * dx) / (2.0 * 25.0));
        return k;
    }();
    std::vector<double> out(static_cast<size_t>(H * W), 0.0);
    for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x) {
            double acc = 0.0, mass = 0.0;
            for (int64_t dy = -R; dy <= R; ++dy) {
                const int64_t yy = y + dy;
                if (yy < 0 || yy >= H) continue;
                for (int64_t dx = -R; dx <= R; ++dx) {
                    const int64_t xx = x + dx;
                    if (xx < 0 || xx >= W) continue;
                    const double kv = kernel[static_cast<size_t>((dy + R) * 7 + dx + R)];
                    acc += img[static_cast<size_t>(yy * W + xx)] * kv;
                    mass += kv;
                }
            }
            out[static_cast<size_t>(y * W + x)] = acc / mass;
        }
    return out;
}

struct Confusion {
    int64_t tp = 0, fp = 0, tn = 0, fn = 0;
};

inline Confusion confusion_at(const Tensor& s, const Tensor& y, double t) {
    Confusion c;
    for (int64_t i = 0; i < s.numel(); ++i) {
        const bool p = fg_at(s[i], t);
        const bool g = y[i] > 0.5;
        if (p && g)
            ++c.tp;
        else if (p && !g)
            ++c.fp;
        else if (!p && g)
            ++c.fn;
        else
            ++c.tn;
    }
    return c;
}

inline double fbeta(double precision, double recall, double beta2) {
    if (precision <= 0.0 && recall <= 0.0) return 0.0;
    return (1.0 + beta2) * precision * recall / (beta2 * precision + recall + kEps);
}

}  // namespace detail

/// Mean absolute error.
inline double mae(const Tensor& s, const Tensor& y) {
    detail::check_pair(s, y);
    double acc = 0.0;
    for (int64_t i = 0; i < s.numel(); ++i) acc += std::fabs(s[i] - y[i]);
    return acc / static_cast<double>(s.numel());
}

enum class FMode { Adaptive, SweepMax, Weighted };

/// F-measure. Adaptive binarizes at min(2 * mean(s), 1); sweep-max takes the
/// best of 256 thresholds; weighted uses dependency-weighted precision and
/// recall (Gaussian error spreading, sigma 5, plus a distance-based pixel
/// importance map). beta^2 is 0.3 for the thresholded modes and 1 for the
/// weighted mode. Empty ground truth scores 1 only for an all-zero map.
inline double f_measure(const Tensor& s, const Tensor& y, FMode mode) {
    detail::check_pair(s, y);
    const int64_t n = s.numel();
    int64_t ng = 0;
    for (int64_t i = 0; i < n; ++i)
        if (y[i] > 0.5) ++ng;

    if (ng == 0) {
        bool any = false;
        for (int64_t i = 0; i < n; ++i)
            if (s[i] > 0.0) any = true;
        return any ? 0.0 : 1.0;
    }

    if (mode == FMode::Adaptive) {
        double t = std::min(2.0 * s.mean(), 1.0);
        auto c = detail::confusion_at(s, y, t);
        if (c.tp == 0) return 0.0;
        const double p = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
        const double r = static_cast<double>(c.tp) / static_cast<double>(ng);
        return detail::fbeta(p, r, 0.3);
    }

    if (mode == FMode::SweepMax) {
        double best = 0.0;
        for (int k = 0; k < 256; ++k) {
            const double t = static_cast<double>(k) / 255.0;
            auto c = detail::confusion_at(s, y, t);
            if (c.tp == 0) continue;
            const double p = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
            const double r = static_cast<double>(c.tp) / static_cast<double>(ng);
            best = std::max(best, detail::fbeta(p, r, 0.3));
        }
        return best;
    }

    // Weighted mode.
    const int64_t H = s.dim(0), W = s.dim(1);
    std::vector<uint8_t> fg(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) fg[static_cast<size_t>(i)] = y[i] > 0.5 ? 1 : 0;
    std::vector<double> dist;
    std::vector<int64_t> nearest;
    detail::edt_nearest(fg, H, W, dist, nearest);

    std::vector<double> err(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) err[static_cast<size_t>(i)] = std::fabs(s[i] - y[i]);
    // Background pixels inherit the error of their nearest foreground pixel
    // before the dependency blur.
    std::vector<double> err_dep = err;
    for (int64_t i = 0; i < n; ++i)
        if (!fg[static_cast<size_t>(i)])
            err_dep[static_cast<size_t>(i)] = err[static_cast<size_t>(nearest[static_cast<size_t>(i)])];
    std::vector<double> blurred = detail::gauss7_filter(err_dep, H, W);

    double sum_fg_ew = 0.0, sum_bg_ew = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        double e = err[static_cast<size_t>(i)];
        if (fg[static_cast<size_t>(i)] && blurred[static_cast<size_t>(i)] < e)
            e = blurred[static_cast<size_t>(i)];
        double importance = 1.0;
        if (!fg[static_cast<size_t>(i)])
            importance = 2.0 - std::exp(std::log(0.5) / 5.0 * dist[static_cast<size_t>(i)]);
        const double ew = e * importance;
        if (fg[static_cast<size_t>(i)])
            sum_fg_ew += ew;
        else
            sum_bg_ew += ew;
    }
    const double tpw = static_cast<double>(ng) - sum_fg_ew;
    const double fpw = sum_bg_ew;
    const double recall = 1.0 - sum_fg_ew / static_cast<double>(ng);
    const double precision = tpw / (kEps + tpw + fpw);
    return detail::fbeta(precision, recall, 1.0);
}

enum class EMode { Mean, Max };

/// Enhanced alignment measure over 256 binarization thresholds. Degenerate
/// maps follow the metric's special cases; values are clamped to [0, 1].
inline double e_measure(const Tensor& s, const Tensor& y, EMode mode) {
    detail::check_pair(s, y);
    const int64_t n = s.numel();
    int64_t ng = 0;
    for (int64_t i = 0; i < n; ++i)
        if (y[i] > 0.5) ++ng;
    const double mu_y = static_cast<double>(ng) / static_cast<double>(n);

    double acc = 0.0, best = 0.0;
    for (int k = 0; k < 256; ++k) {
        const double t = static_cast<double>(k) / 255.0;
        auto c = detail::confusion_at(s, y, t);
        const int64_t nf = c.tp + c.fp;
        double sum;
        if (ng == 0) {
            sum = static_cast<double>(n - nf);  // 1 - FM
        } else if (ng == n) {
            sum = static_cast<double>(nf);  // FM
        } else {
            const double mu_b = static_cast<double>(nf) / static_cast<double>(n);
            const double a1 = 1.0 - mu_b, a0 = -mu_b;
            const double g1 = 1.0 - mu_y, g0 = -mu_y;
            auto enhanced = [](double g, double a) {
                const double xi = 2.0 * g * a / (g * g + a * a + kEps);
                return (xi + 1.0) * (xi + 1.0) / 4.0;
            };
            sum = static_cast<double>(c.tp) * enhanced(g1, a1) +
                  static_cast<double>(c.fp) * enhanced(g0, a1) +
                  static_cast<double>(c.fn) * enhanced(g1, a0) +
                  static_cast<double>(c.tn) * enhanced(g0, a0);
        }
        double score = sum / (static_cast<double>(n) - 1.0 + kEps);
        score = std::min(1.0, std::max(0.0, score));
        acc += score;
        best = std::max(best, score);
    }
    return mode == EMode::Mean ? acc / 256.0 : best;
}

namespace detail {

inline double object_score(const Tensor& s, const Tensor& y, bool foreground) {
    // Mean and sample std of the (complemented, for background) prediction
    // restricted to the region.
    double sum = 0.0;
    int64_t cnt = 0;
    for (int64_t i = 0; i < s.numel(); ++i) {
        const bool in = foreground ? (y[i] > 0.5) : (y[i] <= 0.5);
        if (!in) continue;
        sum += foreground ? s[i] : 1.0 - s[i];
        ++cnt;
    }
    if (cnt == 0) return 0.0;
    const double mean = sum / static_cast<double>(cnt);
    double var = 0.0;
    for (int64_t i = 0; i < s.numel(); ++i) {
        const bool in = foreground ? (y[i] > 0.5) : (y[i] <= 0.5);
        if (!in) continue;
        const double v = (foreground ? s[i] : 1.0 - s[i]) - mean;
        var += v * v;
    }
    const double sd = cnt > 1 ? std::sqrt(var / static_cast<double>(cnt - 1)) : 0.0;
    return 2.0 * mean / (mean * mean + 1.0 + sd + kEps);
}

inline double region_ssim(const Tensor& s, const Tensor& y, int64_t y0, int64_t y1, int64_t x0,
                          int64_t x1) {
    const int64_t cnt = (y1 - y0) * (x1 - x0);
    if (cnt == 0) return 0.0;
    double mx = 0.0, my = 0.0;
    for (int64_t yy = y0; yy < y1; ++yy)
        for (int64_t xx = x0; xx < x1; ++xx) {
            mx += s.at(yy, xx);
            my += y.at(yy, xx);
        }
    mx /= static_cast<double>(cnt);
    my /= static_cast<double>(cnt);
    double vx = 0.0, vy = 0.0, vxy = 0.0;
    for (int64_t yy = y0; yy < y1; ++yy)
        for (int64_t xx = x0; xx < x1; ++xx) {
            const double dx = s.at(yy, xx) - mx;
            const double dy = y.at(yy, xx) - my;
            vx += dx * dx;
            vy += dy * dy;
            vxy += dx * dy;
        }
    const double denom = static_cast<double>(std::max<int64_t>(cnt - 1, 1));
    vx /= denom;
    vy /= denom;
    vxy /= denom;
    const double alpha = 4.0 * mx * my * vxy;
    const double beta = (mx * mx + my * my) * (vx + vy);
    if (alpha != 0.0) return alpha / (beta + kEps);
    return beta == 0.0 ? 1.0 : 0.0;
}

}  // namespace detail

/// Structure measure: equal blend of the object-aware and region-aware terms,
/// clamped to [0, 1]. All-background ground truth scores 1 - mean(s).
inline double s_measure(const Tensor& s, const Tensor& y) {
    detail::check_pair(s, y);
    const int64_t H = s.dim(0), W = s.dim(1);
    const double mu_y = y.mean();
    if (mu_y <= 0.0) return std::min(1.0, std::max(0.0, 1.0 - s.mean()));
    if (mu_y >= 1.0) return std::min(1.0, std::max(0.0, s.mean()));

    const double s_obj = mu_y * detail::object_score(s, y, true) +
                         (1.0 - mu_y) * detail::object_score(s, y, false);

    // Ground-truth centroid, computed in 1-indexed coordinates and rounded
    // half away from zero, then used as an inclusive top-left block size.
    double total = 0.0, sx = 0.0, sy = 0.0;
    for (int64_t yy = 0; yy < H; ++yy)
        for (int64_t xx = 0; xx < W; ++xx)
            if (y.at(yy, xx) > 0.5) {
                total += 1.0;
                sx += static_cast<double>(xx + 1);
                sy += static_cast<double>(yy + 1);
            }
    const int64_t cx = static_cast<int64_t>(std::round(sx / total));
    const int64_t cy = static_cast<int64_t>(std::round(sy / total));

    const double area = static_cast<double>(H * W);
    const double w1 = static_cast<double>(cx * cy) / area;
    const double w2 = static_cast<double>((W - cx) * cy) / area;
    const double w3 = static_cast<double>(cx * (H - cy)) / area;
    const double w4 = 1.0 - w1 - w2 - w3;
    const double s_reg = w1 * detail::region_ssim(s, y, 0, cy, 0, cx) +
                         w2 * detail::region_ssim(s, y, 0, cy, cx, W) +
                         w3 * detail::region_ssim(s, y, cy, H, 0, cx) +
                         w4 * detail::region_ssim(s, y, cy, H, cx, W);

    const double q = 0.5 * s_obj + 0.5 * s_reg;
    return std::min(1.0, std::max(0.0, q));
}

/// Dice and IoU of the map binarized at `threshold` (strictly greater).
/// Empty prediction against empty ground truth scores 1 on both.
inline std::pair<double, double> dice_iou(const Tensor& s, const Tensor& y,
                                          double threshold = 0.5) {
    detail::check_pair(s, y);
    int64_t a = 0, b = 0, inter = 0;
    for (int64_t i = 0; i < s.numel(); ++i) {
        const bool p = s[i] > threshold;
        const bool g = y[i] > 0.5;
        a += p;
        b += g;
        inter += (p && g);
    }
    if (a + b == 0) return {1.0, 1.0};
    const double dice = 2.0 * static_cast<double>(inter) / static_cast<double>(a + b);
    const double iou = static_cast<double>(inter) / static_cast<double>(a + b - inter);
    return {dice, iou};
}

/// Balanced error rate in percent. A class absent from the ground truth
/// contributes a perfect per-class rate.
inline double ber(const Tensor& s, const Tensor& y, double threshold = 0.5) {
    detail::check_pair(s, y);
    int64_t tp = 0, tn = 0, fp = 0, fn = 0;
    for (int64_t i = 0; i < s.numel(); ++i) {
        const bool p = s[i] > threshold;
        const bool g = y[i] > 0.5;
        tp += (p && g);
        fp += (p && !g);
        fn += (!p && g);
        tn += (!p && !g);
    }
    const double tpr = (tp + fn) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 1.0;
    const double tnr = (tn + fp) > 0 ? static_cast<double>(tn) / static_cast<double>(tn + fp) : 1.0;
    return 100.0 * (1.0 - 0.5 * (tpr + tnr));
}

/// All ten per-image scores.
struct PerImageScores {
    double mae = 0.0;
    double f_adp = 0.0, f_w = 0.0, f_max = 0.0;
    double e_mean = 0.0, e_max = 0.0;
    double s_alpha = 0.0;
    double dice = 0.0, iou = 0.0;
    double ber = 0.0;
};

inline PerImageScores score_pair(const Tensor& s, const Tensor& y) {
    PerImageScores r;
    r.mae = mae(s, y);
    r.f_adp = f_measure(s, y, FMode::Adaptive);
    r.f_w = f_measure(s, y, FMode::Weighted);
    r.f_max = f_measure(s, y, FMode::SweepMax);
    r.e_mean = e_measure(s, y, EMode::Mean);
    r.e_max = e_measure(s, y, EMode::Max);
    r.s_alpha = s_measure(s, y);
    auto [d, i] = dice_iou(s, y);
    r.dice = d;
    r.iou = i;
    r.ber = ber(s, y);
    return r;
}

/// Dataset-level aggregate: the arithmetic mean of per-image scores. Order
/// independent by construction.
struct MetricsReport {
    double mae = 0.0;
    double f_adp = 0.0, f_w = 0.0, f_max = 0.0;
    double e_mean = 0.0, e_max = 0.0;
    double s_alpha = 0.0;
    double mdice = 0.0, miou = 0.0;
    double ber = 0.0;
    int64_t n_images = 0;

    std::string to_table() const {
        char buf[512];
        std::string out =
            "  n      M      F_b    F_b^w  F_b^mx E_phi  E_ph^mx S_a    mDice  mIoU   BER\n";
        std::snprintf(buf, sizeof(buf),
                      "  %-6lld %-6.4f %-6.4f %-6.4f %-6.4f %-6.4f %-7.4f %-6.4f %-6.4f %-6.4f %-.2f\n",
                      static_cast<long long>(n_images), mae, f_adp, f_w, f_max, e_mean, e_max,
                      s_alpha, mdice, miou, ber);
        out += buf;
        return out;
    }

    std::string to_kv() const {
        char buf[768];
        std::snprintf(buf, sizeof(buf),
                      "schema_version = 1\n"
                      "n_images = %lld\n"
                      "mae = %.6f\n"
                      "f_adp = %.6f\n"
                      "f_w = %.6f\n"
                      "f_max = %.6f\n"
                      "e_mean = %.6f\n"
                      "e_max = %.6f\n"
                      "s_alpha = %.6f\n"
                      "mdice = %.6f\n"
                      "miou = %.6f\n"
                      "ber = %.6f\n",
                      static_cast<long long>(n_images), mae, f_adp, f_w, f_max, e_mean, e_max,
                      s_alpha, mdice, miou, ber);
        return std::string(buf);
    }
};

inline MetricsReport aggregate(const std::vector<PerImageScores>& scores) {
    MetricsReport r;
    r.n_images = static_cast<int64_t>(scores.size());
    if (scores.empty()) return r;
    for (const auto& s : scores) {
        r.mae += s.mae;
        r.f_adp += s.f_adp;
        r.f_w += s.f_w;
        r.f_max += s.f_max;
        r.e_mean += s.e_mean;
        r.e_max += s.e_max;
        r.s_alpha += s.s_alpha;
        r.mdice += s.dice;
        r.miou += s.iou;
        r.ber += s.ber;
    }
    const double n = static_cast<double>(scores.size());
    r.mae /= n;
    r.f_adp /= n;
    r.f_w /= n;
    r.f_max /= n;
    r.e_mean /= n;
    r.e_max /= n;
    r.s_alpha /= n;
    r.mdice /= n;
    r.miou /= n;
    r.ber /= n;
    return r;
}

}  // namespace hcm::metrics

#include <gtest/gtest.h>

#include "hcm/losses.hpp"
#include "support/test_util.hpp"

using namespace hcm;
using testutil::random_tensor;

namespace {

Tensor random_mask(std::vector<int64_t> shape, double p = 0.5) {
    Tensor t(shape);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = dist(testutil::rng()) < p ? 1.0 : 0.0;
    return t;
}

// Scalar pixel-loop reference for the weighted BCE.
double bce_oracle(const Tensor& p, const Tensor& y, const Tensor& w) {
    double acc = 0.0, wsum = 0.0;
    for (int64_t i = 0; i < p.numel(); ++i) {
        const double sp_pos = std::log1p(std::exp(-std::fabs(p[i]))) + std::max(p[i], 0.0);
        const double sp_neg = std::log1p(std::exp(-std::fabs(p[i]))) + std::max(-p[i], 0.0);
        acc += w[i] * (y[i] * sp_neg + (1.0 - y[i]) * sp_pos);
        wsum += w[i];
    }
    return acc / wsum;
}

double iou_oracle(const Tensor& p, const Tensor& y, const Tensor& w) {
    double inter = 0.0, uni = 0.0;
    for (int64_t i = 0; i < p.numel(); ++i) {
        const double q = 1.0 / (1.0 + std::exp(-p[i]));
        inter += w[i] * q * y[i];
        uni += w[i] * (q + y[i] - q * y[i]);
    }
    return 1.0 - (inter + 1.0) / (uni + 1.0);
}

PredictionPyramid saturated_pyramid(const Tensor& y, double magnitude = 50.0) {
    PredictionPyramid preds;
    int64_t h = y.dim(2), w = y.dim(3);
    for (int s = 0; s < 5; ++s) {
        if (s == 4) {
            h = preds.p[3].value().dim(2);
            w = preds.p[3].value().dim(3);
        }
        Tensor ys = nearest_resize(y, h, w);
        Tensor p({y.dim(0), 1, h, w});
        for (int64_t i = 0; i < p.numel(); ++i) p[i] = ys[i] > 0.5 ? magnitude : -magnitude;
        preds.p[static_cast<size_t>(s)] = Var(p);
        h = std::max<int64_t>(1, h / 2);
        w = std::max<int64_t>(1, w / 2);
    }
    return preds;
}

}  // namespace

TEST(BoundaryWeights, ConstantMasksGiveUnitWeight) {
    for (double v : {0.0, 1.0}) {
        Tensor y = Tensor::full({1, 1, 48, 48}, v);
        Tensor w = losses::boundary_weights(y);
        EXPECT_LT(std::fabs(w[0] - 1.0), 1e-12);
        EXPECT_LT(testutil::max_abs_diff(w, Tensor::full({1, 1, 48, 48}, 1.0)), 1e-12);
    }
}

TEST(BoundaryWeights, SinglePixelValue) {
    Tensor y = Tensor::zeros({1, 1, 64, 64});
    y.at(0, 0, 32, 32) = 1.0;
    Tensor w = losses::boundary_weights(y);
    EXPECT_NEAR(w.at(0, 0, 32, 32), 1.0 + 5.0 * (1.0 - 1.0 / 961.0), 1e-9);
}

TEST(BoundaryWeights, RangeBound) {
    for (int trial = 0; trial < 8; ++trial) {
        Tensor y = random_mask({1, 1, 32, 32});
        Tensor w = losses::boundary_weights(y);
        for (int64_t i = 0; i < w.numel(); ++i) {
            EXPECT_GE(w[i], 1.0 - 1e-12);
            EXPECT_LE(w[i], 6.0 + 1e-12);
        }
    }
}

TEST(WeightedBce, SaturatedCorrectVanishes) {
    Tensor y = random_mask({1, 1, 8, 8});
    Tensor p(y.shape());
    for (int64_t i = 0; i < y.numel(); ++i) p[i] = y[i] > 0.5 ? 50.0 : -50.0;
    Tensor w = losses::boundary_weights(y);
    EXPECT_LT(losses::weighted_bce(Var(p), y, w).item(), 1e-6);
}

TEST(WeightedBce, ZeroLogitsGiveLn2) {
    Tensor y = random_mask({1, 1, 8, 8});
    Tensor p = Tensor::zeros(y.shape());
    Tensor w = Tensor::full(y.shape(), 1.0);
    EXPECT_NEAR(losses::weighted_bce(Var(p), y, w).item(), std::log(2.0), 1e-6);
}

TEST(WeightedBce, MatchesPixelLoopOracle) {
    for (int trial = 0; trial < 50; ++trial) {
        Tensor y = random_mask({1, 1, 8, 8});
        Tensor p = random_tensor({1, 1, 8, 8}, -4.0, 4.0);
        Tensor w = random_tensor({1, 1, 8, 8}, 1.0, 6.0);
        EXPECT_NEAR(losses::weighted_bce(Var(p), y, w).item(), bce_oracle(p, y, w), 1e-6);
    }
}

TEST(WeightedBce, CorrectingASaturatedLogitNeverHurts) {
    Tensor y = random_mask({1, 1, 8, 8});
    Tensor w = random_tensor({1, 1, 8, 8}, 1.0, 6.0);
    Tensor p(y.shape());
    for (int64_t i = 0; i < y.numel(); ++i) p[i] = y[i] > 0.5 ? -30.0 : 30.0;  // all wrong
    double prev = losses::weighted_bce(Var(p), y, w).item();
    for (int64_t i = 0; i < y.numel(); ++i) {
        p[i] = y[i] > 0.5 ? 30.0 : -30.0;  // fix one pixel
        const double cur = losses::weighted_bce(Var(p), y, w).item();
        EXPECT_LE(cur, prev + 1e-12);
        prev = cur;
    }
}

TEST(WeightedIou, ClosedFormCases) {
    // q ~ y exactly.
    Tensor y = random_mask({1, 1, 8, 8});
    Tensor p(y.shape());
    for (int64_t i = 0; i < y.numel(); ++i) p[i] = y[i] > 0.5 ? 50.0 : -50.0;
    Tensor w = random_tensor({1, 1, 8, 8}, 1.0, 6.0);
    EXPECT_LT(losses::weighted_iou(Var(p), y, w).item(), 1e-4);

    // q = 0, y = 1, N = 16 -> 1 - 1/17.
    Tensor y16 = Tensor::full({1, 1, 4, 4}, 1.0);
    Tensor p16 = Tensor::full({1, 1, 4, 4}, -1e4);
    Tensor w16 = Tensor::full({1, 1, 4, 4}, 1.0);
    EXPECT_NEAR(losses::weighted_iou(Var(p16), y16, w16).item(), 0.9412, 1e-4);

    // q = 0.5 uniform over a large mask -> 0.5.
    Tensor yb = Tensor::full({1, 1, 100, 100}, 1.0);
    Tensor pb = Tensor::zeros({1, 1, 100, 100});
    Tensor wb = Tensor::full({1, 1, 100, 100}, 1.0);
    EXPECT_NEAR(losses::weighted_iou(Var(pb), yb, wb).item(), 0.5, 1e-3);
}

TEST(WeightedIou, OracleAndRange) {
    for (int trial = 0; trial < 50; ++trial) {
        Tensor y = random_mask({1, 1, 8, 8});
        Tensor p = random_tensor({1, 1, 8, 8}, -4.0, 4.0);
        Tensor w = random_tensor({1, 1, 8, 8}, 1.0, 6.0);
        const double got = losses::weighted_iou(Var(p), y, w).item();
        EXPECT_NEAR(got, iou_oracle(p, y, w), 1e-6);
        EXPECT_GE(got, 0.0);
        EXPECT_LT(got, 1.0);
    }
}

TEST(TotalLoss, ScaleWeightsExact) {
    Tensor y = random_mask({1, 1, 16, 16});
    PredictionPyramid preds = saturated_pyramid(y);
    auto loss = losses::total_loss(preds, y);
    EXPECT_EQ(loss.levels[0].weight, 1.0);
    EXPECT_EQ(loss.levels[1].weight, 0.5);
    EXPECT_EQ(loss.levels[2].weight, 0.25);
    EXPECT_EQ(loss.levels[3].weight, 0.125);
    EXPECT_EQ(loss.levels[4].weight, 0.0625);
}

TEST(TotalLoss, SaturatedCorrectPyramidVanishes) {
    Tensor y = random_mask({1, 1, 16, 16});
    auto loss = losses::total_loss(saturated_pyramid(y), y);
    EXPECT_LT(loss.value(), 1e-3);
    EXPECT_GE(loss.value(), 0.0);
}

TEST(TotalLoss, WeightingIsLinearInLevels) {
    // Saturate every level except s=3; the total is then 0.25 * level-3 term
    // up to the vanishing contributions of the saturated levels.
    Tensor y = random_mask({1, 1, 16, 16});
    PredictionPyramid preds = saturated_pyramid(y);
    preds.p[2] = Var(random_tensor({1, 1, 4, 4}, -3.0, 3.0));
    auto loss = losses::total_loss(preds, y);
    const double level3 = loss.levels[2].bce + loss.levels[2].iou;
    EXPECT_NEAR(loss.value(), 0.25 * level3, 1e-6);
    // Breakdown reassembles into the total exactly.
    double sum = 0.0;
    for (const auto& l : loss.levels) sum += l.weighted();
    EXPECT_NEAR(loss.value(), sum, 1e-12);
}

TEST(TotalLoss, MissingLevelIsRejected) {
    Tensor y = random_mask({1, 1, 16, 16});
    PredictionPyramid preds = saturated_pyramid(y);
    preds.p[3] = Var();
    EXPECT_THROW(losses::total_loss(preds, y), ShapeError);
}

TEST(TotalLoss, GradientMatchesFiniteDifferences) {
    for (int trial = 0; trial < 5; ++trial) {
        Tensor y = random_mask({1, 1, 8, 8});
        Tensor p1 = random_tensor({1, 1, 8, 8}, -3.0, 3.0);
        PredictionPyramid preds = saturated_pyramid(y);
        auto value = [&]() {
            NoGradGuard ng;
            PredictionPyramid local = preds;
            local.p[0] = Var(p1);
            return losses::total_loss(local, y).value();
        };
        Var vp(p1, true);
        PredictionPyramid graph = preds;
        graph.p[0] = vp;
        auto loss = losses::total_loss(graph, y);
        loss.total.backward();
        Tensor analytic = vp.grad().clone();
        EXPECT_LT(testutil::gradcheck(value, p1, analytic, 1e-3), 1e-3);
    }
}

TEST(TotalLoss, ResizesTargetsPerLevel) {
    // A coarse prediction is scored against nearest-resized, re-binarized
    // masks and bilinearly resized weights.
    Tensor y = random_mask({1, 1, 16, 16});
    Tensor w = losses::boundary_weights(y);
    Tensor p = random_tensor({1, 1, 8, 8}, -2.0, 2.0);
    const double got = losses::weighted_bce(Var(p), y, w).item();
    Tensor ys = nearest_resize(y, 8, 8);
    for (int64_t i = 0; i < ys.numel(); ++i) ys[i] = ys[i] > 0.5 ? 1.0 : 0.0;
    Tensor ws = bilinear_resize(w, 8, 8);
    EXPECT_NEAR(got, bce_oracle(p, ys, ws), 1e-9);
}

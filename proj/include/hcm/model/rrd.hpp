#pragma once

#include <array>
#include <vector>

#include "hcm/model/csc.hpp"
#include "hcm/nn/module.hpp"

namespace hcm {

/// Per-stage logit maps p1..p5, finest first. p5 is the coarse ASPP map.
struct PredictionPyramid {
    std::array<Var, 5> p;  // p[0] = p1 ... p[4] = p5

    Var& p1() { return p[0]; }
    Var& p2() { return p[1]; }
    Var& p3() { return p[2]; }
    Var& p4() { return p[3]; }
    Var& p5() { return p[4]; }
    const Var& finest() const { return p[0]; }
};

namespace nn {

/// Residual channel attention block: x + CA(conv3(relu(conv3(x)))).
class Rcab : public Module {
public:
    explicit Rcab(int64_t ch, int64_t reduction = 16)
        : conv_a(ch, ch, 3), conv_b(ch, ch, 3), ca(ch, reduction) {
        register_module("conv_a", conv_a);
        register_module("conv_b", conv_b);
        register_module("ca", ca);
    }

    Var forward(const Var& x) {
        Var h = conv_b.forward(F::relu(conv_a.forward(x)));
        return F::add(x, ca.forward(h));
    }

    Conv2d conv_a, conv_b;
    ChannelAttention ca;
};

}  // namespace nn

/// One decoder step: gate the stage feature by the sigmoid of the coarser
/// prediction and by its reverse, mine both, and emit this stage's logits.
class RrdStep : public nn::Module {
public:
    explicit RrdStep(int64_t width) : rcab(width * 2), head(width * 2, 1, 3) {
        register_module("rcab", rcab);
        register_module("head", head);
    }

    Var forward(const Var& f_c, const Var& p_next) {
        HCM_CHECK(p_next.value().dim(1) == 1,
                  "rrd_step: prior must have one channel, got " + p_next.value().shape_str());
        const int64_t h = f_c.value().dim(2), w = f_c.value().dim(3);
        Var prior = F::upsample_bilinear(p_next, h, w);
        Var a = F::sigmoid(prior);  // broadcast over channels = repeat to C
        Var fwd = F::mul(f_c, a);
        Var rev = F::mul(f_c, F::one_minus(a));
        return head.forward(rcab.forward(F::concat_channels({fwd, rev})));
    }

    nn::Rcab rcab;
    nn::Conv2d head;
};

/// Top-down reversible re-calibration decoder over stages 4..1.
class RrdDecoder : public nn::Module {
public:
    explicit RrdDecoder(int64_t width) {
        for (int i = 0; i < 4; ++i) {
            steps.push_back(std::make_unique<RrdStep>(width));
            register_module("step" + std::to_string(i + 1), *steps.back());
        }
    }

    /// features[0..3] = context features of stages 1..4; p5 = coarse logits.
    PredictionPyramid decode(const std::array<Var, 4>& features, const Var& p5) {
        PredictionPyramid out;
        out.p[4] = p5;
        Var prior = p5;
        for (int s = 3; s >= 0; --s) {
            prior = steps[static_cast<size_t>(s)]->forward(features[static_cast<size_t>(s)], prior);
            out.p[static_cast<size_t>(s)] = prior;
        }
        return out;
    }

    std::vector<std::unique_ptr<RrdStep>> steps;
};

}  // namespace hcm

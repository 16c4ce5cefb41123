#pragma once

#include "hcm/nn/module.hpp"

namespace hcm::nn {

/// Squeeze-style channel gate: global average pool -> bottleneck (reduction
/// 16) -> sigmoid, applied multiplicatively. The bottleneck rectifier is
/// leaky so narrow bottlenecks cannot go silent.
class ChannelAttention : public Module {
public:
    explicit ChannelAttention(int64_t ch, int64_t reduction = 16)
        : squeeze(ch, std::max<int64_t>(1, ch / reduction), 1, 1, 0),
          excite(std::max<int64_t>(1, ch / reduction), ch, 1, 1, 0) {
        register_module("squeeze", squeeze);
        register_module("excite", excite);
    }

    Var gate(const Var& x) {
        return F::sigmoid(excite.forward(F::leaky_relu(squeeze.forward(F::global_avg_pool(x)))));
    }

    Var forward(const Var& x) { return F::mul(x, gate(x)); }

    Conv2d squeeze, excite;
};

/// Spatial gate: channel-mean and channel-max maps -> 7x7 conv -> sigmoid.
class SpatialAttention : public Module {
public:
    SpatialAttention() : conv(2, 1, 7, 1, 3) { register_module("conv", conv); }

    Var gate(const Var& x) {
        return F::sigmoid(conv.forward(F::concat_channels({F::channel_mean(x), F::channel_max(x)})));
    }

    Var forward(const Var& x) { return F::mul(x, gate(x)); }

    Conv2d conv;
};

}  // namespace hcm::nn

namespace hcm {

/// Joint attention over a pair of same-shape features: 1x1 fusion of the
/// concatenation, then sequential channel and spatial gating.
class JointAttention : public nn::Module {
public:
    explicit JointAttention(int64_t width) : fuse(width * 2, width, 1), ca(width), sa() {
        register_module("fuse", fuse);
        register_module("ca", ca);
        register_module("sa", sa);
    }

    Var forward(const Var& a, const Var& b) {
        HCM_CHECK(a.value().same_shape(b.value()),
                  "joint_attention: shape mismatch " + a.value().shape_str() + " vs " +
                      b.value().shape_str());
        Var g = fuse.forward(F::concat_channels({a, b}));
        if (gates_disabled) return g;
        return sa.forward(ca.forward(g));
    }

    nn::ConvBNReLU fuse;
    nn::ChannelAttention ca;
    nn::SpatialAttention sa;
    // Test hook: forces both gates to 1 so the fusion path is observable.
    bool gates_disabled = false;
};

/// Cross-stage coherence: upsample the coarser feature to this stage's size,
/// apply joint attention, then normalize per position across channels.
class CscBlock : public nn::Module {
public:
    explicit CscBlock(int64_t width) : ja(width) { register_module("ja", ja); }

    Var forward(const Var& f_stage, const Var& f_next) {
        Var up = F::upsample_bilinear(f_next, f_stage.value().dim(2), f_stage.value().dim(3));
        return F::position_norm(ja.forward(f_stage, up));
    }

    JointAttention ja;
};

}  // namespace hcm

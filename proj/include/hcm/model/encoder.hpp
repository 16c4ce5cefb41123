#pragma once

#include <array>
#include <memory>
#include <utility>
#include <vector>

#include "hcm/nn/module.hpp"

namespace hcm {

/// Backbone stage outputs at strides 2/4/8/16/32 plus the semantic feature
/// the pyramid-pooling head produces at stride 32.
struct FeaturePyramid {
    Var f0, f1, f2, f3, f4;
    Var f5;  // set by the ASPP head
};

namespace nn {

class Bottleneck : public Module {
public:
    Bottleneck(int64_t in_ch, int64_t planes, int64_t stride)
        : conv1(in_ch, planes, 1, 1, 0, 1, false),
          conv2(planes, planes, 3, stride, 1, 1, false),
          conv3(planes, planes * 4, 1, 1, 0, 1, false),
          bn1(planes),
          bn2(planes),
          bn3(planes * 4),
          has_downsample_(stride != 1 || in_ch != planes * 4) {
        register_module("conv1", conv1);
        register_module("bn1", bn1);
        register_module("conv2", conv2);
        register_module("bn2", bn2);
        register_module("conv3", conv3);
        register_module("bn3", bn3);
        if (has_downsample_) {
            down_conv = std::make_unique<Conv2d>(in_ch, planes * 4, 1, stride, 0, 1, false);
            down_bn = std::make_unique<BatchNorm2d>(planes * 4);
            register_module("down_conv", *down_conv);
            register_module("down_bn", *down_bn);
        }
    }

    Var forward(const Var& x) {
        Var h = F::relu(bn1.forward(conv1.forward(x)));
        h = F::relu(bn2.forward(conv2.forward(h)));
        h = bn3.forward(conv3.forward(h));
        Var skip = has_downsample_ ? down_bn->forward(down_conv->forward(x)) : x;
        return F::relu(F::add(h, skip));
    }

    Conv2d conv1, conv2, conv3;
    BatchNorm2d bn1, bn2, bn3;
    std::unique_ptr<Conv2d> down_conv;
    std::unique_ptr<BatchNorm2d> down_bn;

private:
    bool has_downsample_;
};

/// Standard 50-layer residual backbone; stage channel widths are
/// (64, 256, 512, 1024, 2048) at strides (2, 4, 8, 16, 32).
class ResNet50 : public Module {
public:
    ResNet50() : stem(3, 64, 7, 2, 3, 1, false), stem_bn(64) {
        register_module("stem", stem);
        register_module("stem_bn", stem_bn);
        make_layer(layer1, "layer1", 64, 64, 3, 1);
        make_layer(layer2, "layer2", 256, 128, 4, 2);
        make_layer(layer3, "layer3", 512, 256, 6, 2);
        make_layer(layer4, "layer4", 1024, 512, 3, 2);
    }

    FeaturePyramid forward(const Var& x) {
        FeaturePyramid p;
        p.f0 = F::relu(stem_bn.forward(stem.forward(x)));
        Var h = F::max_pool2d(p.f0, 3, 2, 1);
        for (auto& b : layer1) h = b->forward(h);
        p.f1 = h;
        for (auto& b : layer2) h = b->forward(h);
        p.f2 = h;
        for (auto& b : layer3) h = b->forward(h);
        p.f3 = h;
        for (auto& b : layer4) h = b->forward(h);
        p.f4 = h;
        return p;
    }

    Conv2d stem;
    BatchNorm2d stem_bn;
    std::vector<std::unique_ptr<Bottleneck>> layer1, layer2, layer3, layer4;

private:
    void make_layer(std::vector<std::unique_ptr<Bottleneck>>& layer, const std::string& name,
                    int64_t in_ch, int64_t planes, int64_t blocks, int64_t stride) {
        layer.push_back(std::make_unique<Bottleneck>(in_ch, planes, stride));
        for (int64_t i = 1; i < blocks; ++i)
            layer.push_back(std::make_unique<Bottleneck>(planes * 4, planes, 1));
        for (size_t i = 0; i < layer.size(); ++i)
            register_module(name + "." + std::to_string(i), *layer[i]);
    }
};

/// Atrous spatial pyramid pooling over the stride-32 feature: four parallel
/// 3x3 branches at dilations {1, 6, 12, 18} plus a global-average branch,
/// fused to the decoder width by a 1x1 convolution.
class Aspp : public Module {
public:
    Aspp(int64_t in_ch, int64_t out_ch)
        : b0(in_ch, out_ch, 3, 1, 1, 1),
          b1(in_ch, out_ch, 3, 1, 6, 6),
          b2(in_ch, out_ch, 3, 1, 12, 12),
          b3(in_ch, out_ch, 3, 1, 18, 18),
          gp(in_ch, out_ch, 1),
          fuse(out_ch * 5, out_ch, 1),
          project(out_ch, 1, 1) {
        register_module("b0", b0);
        register_module("b1", b1);
        register_module("b2", b2);
        register_module("b3", b3);
        register_module("gp", gp);
        register_module("fuse", fuse);
        register_module("project", project);
    }

    /// Returns (feature, coarse logit map).
    std::pair<Var, Var> forward(const Var& f4) {
        const int64_t h = f4.value().dim(2), w = f4.value().dim(3);
        Var pooled = F::upsample_bilinear(gp.forward(F::global_avg_pool(f4)), h, w);
        Var f = fuse.forward(F::concat_channels(
            {b0.forward(f4), b1.forward(f4), b2.forward(f4), b3.forward(f4), pooled}));
        return {f, project.forward(f)};
    }

    ConvBNReLU b0, b1, b2, b3, gp, fuse;
    Conv2d project;
};

}  // namespace nn

/// Feature extractor: backbone pyramid plus the ASPP coarse head.
class Encoder : public nn::Module {
public:
    explicit Encoder(int64_t decoder_width = 64) : aspp(2048, decoder_width) {
        register_module("backbone", backbone);
        register_module("aspp", aspp);
    }

    /// Backbone stages only (f0..f4). Rejects inputs whose spatial size is
    /// not a multiple of 32 (misconfigured preprocessing upstream).
    FeaturePyramid extract_features(const Var& image) {
        const Tensor& v = image.value();
        HCM_CHECK(v.ndim() == 4 && v.dim(1) == 3,
                  "extract_features: expected B x 3 x H x W, got " + v.shape_str());
        HCM_CHECK(v.dim(2) % 32 == 0 && v.dim(3) % 32 == 0,
                  "extract_features: H and W must be divisible by 32, got " + v.shape_str());
        return backbone.forward(image);
    }

    /// ASPP head on the stride-32 stage: (f5, p5).
    std::pair<Var, Var> aspp_head(const Var& f4) {
        HCM_CHECK(f4.value().dim(1) == 2048,
                  "aspp_head: expected 2048-channel input, got " + f4.value().shape_str());
        return aspp.forward(f4);
    }

    nn::ResNet50 backbone;
    nn::Aspp aspp;
};

}  // namespace hcm

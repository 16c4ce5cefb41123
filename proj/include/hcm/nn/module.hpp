#pragma once

#include <string>
#include <utility>
#include <vector>

#include "hcm/core/conv.hpp"
#include "hcm/core/ops.hpp"
#include "hcm/nn/init.hpp"

namespace hcm::nn {

/// Base class for layers with parameters. Children, parameters and buffers
/// are registered by the owning module so checkpoints can address every
/// tensor by a dotted path.
class Module {
public:
    Module() = default;
    virtual ~Module() = default;
    Module(const Module&) = delete;
    Module& operator=(const Module&) = delete;

    void register_parameter(const std::string& name, Var& p) {
        p.set_requires_grad(true);
        params_.emplace_back(name, &p);
    }

    void register_buffer(const std::string& name, Tensor& t) { buffers_.emplace_back(name, &t); }

    void register_module(const std::string& name, Module& m) { children_.emplace_back(name, &m); }

    void named_parameters(const std::string& prefix,
                          std::vector<std::pair<std::string, Var*>>& out) {
        for (auto& [n, p] : params_) out.emplace_back(prefix + n, p);
        for (auto& [n, c] : children_) c->named_parameters(prefix + n + ".", out);
    }

    std::vector<std::pair<std::string, Var*>> named_parameters() {
        std::vector<std::pair<std::string, Var*>> out;
        named_parameters("", out);
        return out;
    }

    void named_buffers(const std::string& prefix,
                       std::vector<std::pair<std::string, Tensor*>>& out) {
        for (auto& [n, b] : buffers_) out.emplace_back(prefix + n, b);
        for (auto& [n, c] : children_) c->named_buffers(prefix + n + ".", out);
    }

    std::vector<std::pair<std::string, Tensor*>> named_buffers() {
        std::vector<std::pair<std::string, Tensor*>> out;
        named_buffers("", out);
        return out;
    }

    std::vector<Var*> parameters() {
        std::vector<Var*> out;
        for (auto& [n, p] : named_parameters()) out.push_back(p);
        return out;
    }

    int64_t num_parameters() {
        int64_t n = 0;
        for (Var* p : parameters()) n += p->value().numel();
        return n;
    }

    void train(bool mode = true) {
        training_ = mode;
        for (auto& [n, c] : children_) c->train(mode);
    }
    void eval() { train(false); }
    bool is_training() const { return training_; }

    void zero_grad() {
        for (Var* p : parameters()) p->zero_grad();
    }

protected:
    bool training_ = true;

private:
    std::vector<std::pair<std::string, Var*>> params_;
    std::vector<std::pair<std::string, Tensor*>> buffers_;
    std::vector<std::pair<std::string, Module*>> children_;
};

class Conv2d : public Module {
public:
    /// pad < 0 selects same-padding (dilation * (k - 1) / 2).
    Conv2d(int64_t in_ch, int64_t out_ch, int64_t k, int64_t stride = 1, int64_t pad = -1,
           int64_t dilation = 1, bool bias = true)
        : weight(Tensor({out_ch, in_ch, k, k})), spec_{stride, pad < 0 ? dilation * (k - 1) / 2 : pad, dilation} {
        const int64_t fan_in = in_ch * k * k;
        init::kaiming_normal_(weight.value(), fan_in);
        register_parameter("weight", weight);
        if (bias) {
            bias_ = Var(Tensor::zeros({out_ch}));
            register_parameter("bias", bias_);
        }
    }

    Var forward(const Var& x) {
        return bias_.value().defined() ? F::conv2d(x, weight, bias_, spec_)
                                       : F::conv2d(x, weight, spec_);
    }

    const ConvSpec& spec() const { return spec_; }

    Var weight;
    Var& bias() { return bias_; }

private:
    Var bias_;
    ConvSpec spec_;
};

class BatchNorm2d : public Module {
public:
    explicit BatchNorm2d(int64_t ch, double momentum = 0.1, double eps = 1e-5)
        : gamma(Tensor::full({ch}, 1.0)),
          beta(Tensor::zeros({ch})),
          running_mean(Tensor::zeros({ch})),
          running_var(Tensor::full({ch}, 1.0)),
          momentum_(momentum),
          eps_(eps) {
        register_parameter("gamma", gamma);
        register_parameter("beta", beta);
        register_buffer("running_mean", running_mean);
        register_buffer("running_var", running_var);
    }

    Var forward(const Var& x) {
        return F::batch_norm2d(x, gamma, beta, running_mean, running_var, is_training(),
                               momentum_, eps_);
    }

    Var gamma, beta;
    Tensor running_mean, running_var;

private:
    double momentum_, eps_;
};

/// conv (no bias) -> batch norm -> relu, the default unit in the decoder.
class ConvBNReLU : public Module {
public:
    ConvBNReLU(int64_t in_ch, int64_t out_ch, int64_t k, int64_t stride = 1, int64_t pad = -1,
               int64_t dilation = 1)
        : conv(in_ch, out_ch, k, stride, pad, dilation, /*bias=*/false), bn(out_ch) {
        register_module("conv", conv);
        register_module("bn", bn);
    }

    Var forward(const Var& x) { return F::relu(bn.forward(conv.forward(x))); }

    Conv2d conv;
    BatchNorm2d bn;
};

}  // namespace hcm::nn

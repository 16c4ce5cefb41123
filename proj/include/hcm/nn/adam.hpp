#pragma once

#include <cmath>
#include <vector>

#include "hcm/core/autograd.hpp"

namespace hcm::nn {

/// Adam with bias correction. Moment buffers are addressable by parameter
/// index so checkpoints can persist and restore the full state.
class Adam {
public:
    struct Slot {
        Tensor m, v;
    };

    explicit Adam(std::vector<Var*> params, double lr = 1e-4, double beta1 = 0.9,
                  double beta2 = 0.999, double eps = 1e-8, double weight_decay = 0.0)
        : params_(std::move(params)),
          lr_(lr),
          beta1_(beta1),
          beta2_(beta2),
          eps_(eps),
          weight_decay_(weight_decay) {
        slots_.resize(params_.size());
        for (size_t i = 0; i < params_.size(); ++i) {
            slots_[i].m = Tensor::zeros(params_[i]->value().shape());
            slots_[i].v = Tensor::zeros(params_[i]->value().shape());
        }
    }

    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }
    double beta1() const { return beta1_; }
    double beta2() const { return beta2_; }
    int64_t step_count() const { return step_; }
    std::vector<Slot>& slots() { return slots_; }
    void set_step_count(int64_t s) { step_ = s; }

    void zero_grad() {
        for (Var* p : params_) p->zero_grad();
    }

    void step() {
        ++step_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
        for (size_t i = 0; i < params_.size(); ++i) {
            Var* p = params_[i];
            if (!p->has_grad()) continue;
            const double* g = p->grad().data();
            double* m = slots_[i].m.data();
            double* v = slots_[i].v.data();
            double* w = p->value().data();
            const int64_t n = p->value().numel();
            for (int64_t j = 0; j < n; ++j) {
                double gj = g[j];
                if (weight_decay_ != 0.0) gj += weight_decay_ * w[j];
                m[j] = beta1_ * m[j] + (1.0 - beta1_) * gj;
                v[j] = beta2_ * v[j] + (1.0 - beta2_) * gj * gj;
                const double mhat = m[j] / bc1;
                const double vhat = v[j] / bc2;
                w[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

private:
    std::vector<Var*> params_;
    std::vector<Slot> slots_;
    double lr_, beta1_, beta2_, eps_, weight_decay_;
    int64_t step_ = 0;
};

}  // namespace hcm::nn

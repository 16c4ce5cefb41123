#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "hcm/core/tensor.hpp"

namespace hcm {

class Var;

namespace detail {

struct VarImpl {
    Tensor value;
    Tensor grad;  // allocated on first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<VarImpl>> parents;
    // Receives the gradient w.r.t. this node's value and pushes it to parents.
    std::function<void(const Tensor&)> backward_fn;

    void accumulate(const Tensor& g) {
        if (!grad.defined()) grad = Tensor::zeros(value.shape());
        grad.add_(g);
    }
};

inline bool& grad_mode_flag() {
    thread_local bool enabled = true;
    return enabled;
}

}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode_flag(); }

/// Disables graph construction in its scope (inference mode).
class NoGradGuard {
public:
    NoGradGuard() : prev_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
    ~NoGradGuard() { detail::grad_mode_flag() = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

/// A tensor plus its place in the autodiff tape. Cheap to copy (shared impl).
class Var {
public:
    Var() : impl_(std::make_shared<detail::VarImpl>()) {}

    explicit Var(Tensor value, bool requires_grad = false)
        : impl_(std::make_shared<detail::VarImpl>()) {
        impl_->value = std::move(value);
        impl_->requires_grad = requires_grad;
    }

    const Tensor& value() const { return impl_->value; }
    Tensor& value() { return impl_->value; }
    const Tensor& grad() const { return impl_->grad; }
    bool has_grad() const { return impl_->grad.defined(); }
    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool b) { impl_->requires_grad = b; }

    void zero_grad() {
        if (impl_->grad.defined()) impl_->grad.fill(0.0);
    }

    double item() const {
        HCM_CHECK(impl_->value.numel() == 1, "item(): tensor is not scalar");
        return impl_->value[0];
    }

    std::shared_ptr<detail::VarImpl> impl() const { return impl_; }

    /// Builds an op result. The backward closure is only attached when grad
    /// mode is on and some parent participates in differentiation.
    static Var make(Tensor value, std::vector<Var> parents,
                    std::function<void(const Tensor&)> backward_fn) {
        Var out(std::move(value));
        bool needs = false;
        if (grad_enabled()) {
            for (const Var& p : parents)
                if (p.impl_->requires_grad || p.impl_->backward_fn) needs = true;
        }
        if (needs) {
            out.impl_->requires_grad = true;
            out.impl_->parents.reserve(parents.size());
            for (Var& p : parents) out.impl_->parents.push_back(p.impl_);
            out.impl_->backward_fn = std::move(backward_fn);
        }
        return out;
    }

    /// Reverse-mode pass from this (scalar) node. Gradients accumulate into
    /// every reachable node that carries requires_grad.
    void backward() const {
        HCM_CHECK(impl_->value.numel() == 1, "backward(): root must be scalar");
        backward(Tensor::scalar(1.0));
    }

    void backward(const Tensor& seed) const {
        std::vector<detail::VarImpl*> order;
        topo_sort(order);
        impl_->accumulate(seed);
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            detail::VarImpl* n = *it;
            if (!n->backward_fn || !n->grad.defined()) continue;
            n->backward_fn(n->grad);
        }
    }

private:
    void topo_sort(std::vector<detail::VarImpl*>& order) const {
        std::unordered_set<detail::VarImpl*> visited;
        // Iterative post-order DFS over the parent DAG.
        std::vector<std::pair<detail::VarImpl*, size_t>> stack;
        stack.emplace_back(impl_.get(), 0);
        visited.insert(impl_.get());
        while (!stack.empty()) {
            auto& [node, idx] = stack.back();
            if (idx < node->parents.size()) {
                detail::VarImpl* p = node->parents[idx++].get();
                if (!visited.count(p)) {
                    visited.insert(p);
                    stack.emplace_back(p, 0);
                }
            } else {
                order.push_back(node);
                stack.pop_back();
            }
        }
    }

    std::shared_ptr<detail::VarImpl> impl_;
};

}  // namespace hcm

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <memory>
#include <numeric>
#include <sstream>
#include <vector>

#include "hcm/core/common.hpp"

namespace hcm {

/// Dense row-major tensor of doubles. Copies are shallow (shared storage);
/// use clone() for a deep copy. Most of the library works with 4-D
/// B x C x H x W layouts, but any rank is representable.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int64_t> shape)
        : shape_(std::move(shape)),
          data_(std::make_shared<std::vector<double>>(count(shape_), 0.0)) {}

    Tensor(std::vector<int64_t> shape, double fill)
        : shape_(std::move(shape)),
          data_(std::make_shared<std::vector<double>>(count(shape_), fill)) {}

    static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int64_t> shape, double v) { return Tensor(std::move(shape), v); }

    static Tensor from_vector(std::vector<int64_t> shape, std::vector<double> values) {
        Tensor t;
        t.shape_ = std::move(shape);
        HCM_CHECK(count(t.shape_) == static_cast<int64_t>(values.size()),
                  "from_vector: value count does not match shape");
        t.data_ = std::make_shared<std::vector<double>>(std::move(values));
        return t;
    }

    static Tensor scalar(double v) { return Tensor({1}, v); }

    bool defined() const { return data_ != nullptr; }
    const std::vector<int64_t>& shape() const { return shape_; }
    int64_t ndim() const { return static_cast<int64_t>(shape_.size()); }
    int64_t dim(int64_t i) const { return shape_.at(static_cast<size_t>(i)); }
    int64_t numel() const { return defined() ? static_cast<int64_t>(data_->size()) : 0; }

    double* data() { return data_->data(); }
    const double* data() const { return data_->data(); }

    double& operator[](int64_t i) { return (*data_)[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return (*data_)[static_cast<size_t>(i)]; }

    /// 4-D accessor (b, c, y, x).
    double& at(int64_t b, int64_t c, int64_t y, int64_t x) {
        return (*data_)[static_cast<size_t>(((b * shape_[1] + c) * shape_[2] + y) * shape_[3] + x)];
    }
    double at(int64_t b, int64_t c, int64_t y, int64_t x) const {
        return (*data_)[static_cast<size_t>(((b * shape_[1] + c) * shape_[2] + y) * shape_[3] + x)];
    }

    /// 2-D accessor (y, x).
    double& at(int64_t y, int64_t x) {
        return (*data_)[static_cast<size_t>(y * shape_[1] + x)];
    }
    double at(int64_t y, int64_t x) const {
        return (*data_)[static_cast<size_t>(y * shape_[1] + x)];
    }

    Tensor clone() const {
        Tensor t;
        t.shape_ = shape_;
        t.data_ = std::make_shared<std::vector<double>>(*data_);
        return t;
    }

    /// Same storage, new shape with equal element count.
    Tensor reshape(std::vector<int64_t> shape) const {
        HCM_CHECK(count(shape) == numel(), "reshape: element count mismatch");
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_ = data_;
        return t;
    }

    void fill(double v) { std::fill(data_->begin(), data_->end(), v); }

    void add_(const Tensor& other) {
        HCM_CHECK(numel() == other.numel(), "add_: size mismatch");
        double* d = data();
        const double* o = other.data();
        for (int64_t i = 0; i < numel(); ++i) d[i] += o[i];
    }

    void scale_(double s) {
        double* d = data();
        for (int64_t i = 0; i < numel(); ++i) d[i] *= s;
    }

    double sum() const {
        const double* d = data();
        double acc = 0.0;
        for (int64_t i = 0; i < numel(); ++i) acc += d[i];
        return acc;
    }

    double mean() const { return numel() > 0 ? sum() / static_cast<double>(numel()) : 0.0; }

    double max_abs() const {
        const double* d = data();
        double m = 0.0;
        for (int64_t i = 0; i < numel(); ++i) m = std::max(m, std::fabs(d[i]));
        return m;
    }

    bool all_finite() const {
        const double* d = data();
        for (int64_t i = 0; i < numel(); ++i)
            if (!std::isfinite(d[i])) return false;
        return true;
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    std::string shape_str() const {
        std::ostringstream os;
        os << "[";
        for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
        os << "]";
        return os.str();
    }

    static int64_t count(const std::vector<int64_t>& shape) {
        int64_t n = 1;
        for (int64_t d : shape) {
            HCM_CHECK(d >= 0, "negative dimension");
            n *= d;
        }
        return n;
    }

private:
    std::vector<int64_t> shape_;
    std::shared_ptr<std::vector<double>> data_;
};

}  // namespace hcm

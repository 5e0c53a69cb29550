// Copyright (C) 2026 the patchwork authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace patchwork {

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

// Dense row-major double tensor. All model math in the project runs in
// double so finite-difference checks stay meaningful.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape dims) : dims_(std::move(dims)) {
        data_ = Eigen::ArrayXd::Zero(shape_numel(dims_));
    }
    Tensor(Shape dims, Eigen::ArrayXd data) : dims_(std::move(dims)), data_(std::move(data)) {
        if (data_.size() != shape_numel(dims_))
            throw std::invalid_argument("Tensor: data size does not match shape " + shape_str(dims_));
    }

    static Tensor zeros(Shape dims) { return Tensor(std::move(dims)); }
    static Tensor full(Shape dims, double v) {
        Tensor t(std::move(dims));
        t.data_.setConstant(v);
        return t;
    }
    static Tensor scalar(double v) { return full({1}, v); }

    const Shape& dims() const { return dims_; }
    int dim(int i) const { return dims_.at(static_cast<size_t>(i)); }
    int ndim() const { return static_cast<int>(dims_.size()); }
    int64_t numel() const { return data_.size(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    Eigen::ArrayXd& array() { return data_; }
    const Eigen::ArrayXd& array() const { return data_; }

    double& at(int64_t i) { return data_[i]; }
    double at(int64_t i) const { return data_[i]; }
    double item() const {
        if (numel() != 1) throw std::logic_error("Tensor::item on non-scalar " + shape_str(dims_));
        return data_[0];
    }

    // 2-D views for linear algebra; tensor layout is row-major.
    using MatMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
    using CMatMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

    MatMap mat() {
        check_2d();
        return MatMap(data_.data(), dims_[0], dims_[1]);
    }
    CMatMap mat() const {
        check_2d();
        return CMatMap(data_.data(), dims_[0], dims_[1]);
    }
    MatMap as_mat(int rows, int cols) {
        if (int64_t(rows) * cols != numel()) throw std::logic_error("as_mat: size mismatch");
        return MatMap(data_.data(), rows, cols);
    }
    CMatMap as_mat(int rows, int cols) const {
        if (int64_t(rows) * cols != numel()) throw std::logic_error("as_mat: size mismatch");
        return CMatMap(data_.data(), rows, cols);
    }

    bool same_shape(const Tensor& o) const { return dims_ == o.dims_; }
    bool all_finite() const { return data_.isFinite().all(); }

    Tensor reshaped(Shape dims) const {
        if (shape_numel(dims) != numel())
            throw std::invalid_argument("reshape: numel mismatch " + shape_str(dims_) + " -> " + shape_str(dims));
        return Tensor(std::move(dims), data_);
    }

private:
    void check_2d() const {
        if (dims_.size() != 2) throw std::logic_error("Tensor::mat on non-2D " + shape_str(dims_));
    }

    Shape dims_;
    Eigen::ArrayXd data_;
};

}  // namespace patchwork

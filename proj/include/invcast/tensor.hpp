#pragma once

#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "invcast/common.hpp"

namespace invcast {

/// Dense row-major tensor of doubles, rank 0 through 3.
/// Rank 0 is a scalar (size 1). Value semantics throughout.
class Tensor {
public:
    Tensor() : dims_{}, data_(1, 0.0) {}

    static Tensor scalar(double v) {
        Tensor t;
        t.data_[0] = v;
        return t;
    }

    static Tensor zeros(std::vector<int> dims) {
        Tensor t;
        t.dims_ = std::move(dims);
        t.check_dims();
        t.data_.assign(t.count(), 0.0);
        return t;
    }

    static Tensor filled(std::vector<int> dims, double v) {
        Tensor t = zeros(std::move(dims));
        for (auto& x : t.data_) x = v;
        return t;
    }

    static Tensor from_vector(std::vector<double> data) {
        Tensor t;
        t.dims_ = {static_cast<int>(data.size())};
        t.data_ = std::move(data);
        t.check_dims();
        require(!t.data_.empty(), "tensor: rank-1 tensor must be non-empty");
        return t;
    }

    static Tensor from_data(std::vector<int> dims, std::vector<double> data) {
        Tensor t;
        t.dims_ = std::move(dims);
        t.check_dims();
        require(data.size() == t.count(), "tensor: data size %zu does not match shape %s",
                data.size(), shape_str(t.dims_).c_str());
        t.data_ = std::move(data);
        return t;
    }

    int rank() const { return static_cast<int>(dims_.size()); }
    const std::vector<int>& dims() const { return dims_; }
    int dim(int axis) const { return dims_.at(static_cast<size_t>(axis)); }
    size_t size() const { return data_.size(); }

    double& operator[](size_t i) { return data_[i]; }
    double operator[](size_t i) const { return data_[i]; }

    double& at(int i) { return data_[static_cast<size_t>(i)]; }
    double at(int i) const { return data_[static_cast<size_t>(i)]; }
    double& at(int i, int j) { return data_[static_cast<size_t>(i) * dims_[1] + j]; }
    double at(int i, int j) const { return data_[static_cast<size_t>(i) * dims_[1] + j]; }
    double& at(int i, int j, int k) {
        return data_[(static_cast<size_t>(i) * dims_[1] + j) * dims_[2] + k];
    }
    double at(int i, int j, int k) const {
        return data_[(static_cast<size_t>(i) * dims_[1] + j) * dims_[2] + k];
    }

    double scalar_value() const {
        require(data_.size() == 1, "tensor: scalar_value() on tensor of shape %s",
                shape_str(dims_).c_str());
        return data_[0];
    }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool same_shape(const Tensor& o) const { return dims_ == o.dims_; }

    static std::string shape_str(const std::vector<int>& dims) {
        std::string s = "[";
        for (size_t i = 0; i < dims.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(dims[i]);
        }
        return s + "]";
    }
    std::string shape_str() const { return shape_str(dims_); }

private:
    size_t count() const {
        size_t n = 1;
        for (int d : dims_) n *= static_cast<size_t>(d);
        return n;
    }
    void check_dims() const {
        require(dims_.size() <= 3, "tensor: rank %zu exceeds 3", dims_.size());
        for (int d : dims_)
            require(d >= 1, "tensor: non-positive dimension in shape %s", shape_str(dims_).c_str());
    }

    std::vector<int> dims_;
    std::vector<double> data_;
};

}  // namespace invcast

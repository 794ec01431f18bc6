#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fsa::ad {

// Dense row-major tensor of doubles. Rank 1..3 is all the models need.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;

    static Tensor zeros(std::vector<int> s);
    static Tensor full(std::vector<int> s, double v);
    static Tensor scalar(double v);
    static Tensor vec(std::vector<double> v);
    static Tensor mat(int r, int c, std::vector<double> v);

    int64_t size() const { return static_cast<int64_t>(data.size()); }
    int rows() const { return shape.empty() ? 1 : shape[0]; }
    int cols() const { return shape.size() < 2 ? 1 : shape[1]; }

    double& operator()(int i, int j) { return data[static_cast<size_t>(i) * cols() + j]; }
    double operator()(int i, int j) const { return data[static_cast<size_t>(i) * cols() + j]; }
    // rank-3 access, shape {d0, d1, d2}
    double& at3(int i, int j, int k) {
        return data[(static_cast<size_t>(i) * shape[1] + j) * shape[2] + k];
    }
    double at3(int i, int j, int k) const {
        return data[(static_cast<size_t>(i) * shape[1] + j) * shape[2] + k];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    bool all_finite() const;
};

// Named trainable tensor; grad accumulates across backward passes until
// zero_grad.
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;

    Param() = default;
    Param(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {
        grad = Tensor::zeros(value.shape);
    }
};

}  // namespace fsa::ad

#include "fsa/tensor.hpp"

#include <cmath>
#include <numeric>

#include "fsa/errors.hpp"

namespace fsa::ad {

static int64_t shape_size(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) {
        if (d <= 0) throw NumericError("tensor dimension must be positive");
        n *= d;
    }
    return n;
}

Tensor Tensor::zeros(std::vector<int> s) {
    Tensor t;
    t.data.assign(static_cast<size_t>(shape_size(s)), 0.0);
    t.shape = std::move(s);
    return t;
}

Tensor Tensor::full(std::vector<int> s, double v) {
    Tensor t = zeros(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
}

Tensor Tensor::scalar(double v) {
    Tensor t;
    t.shape = {1};
    t.data = {v};
    return t;
}

Tensor Tensor::vec(std::vector<double> v) {
    Tensor t;
    t.shape = {static_cast<int>(v.size())};
    t.data = std::move(v);
    return t;
}

Tensor Tensor::mat(int r, int c, std::vector<double> v) {
    if (static_cast<int64_t>(v.size()) != static_cast<int64_t>(r) * c)
        throw NumericError("matrix literal size mismatch");
    Tensor t;
    t.shape = {r, c};
    t.data = std::move(v);
    return t;
}

bool Tensor::all_finite() const {
    for (double x : data)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace fsa::ad

#pragma once

#include <cstdint>
#include <vector>

#include "fsa/tensor.hpp"

namespace fsa::ad {

void zero_grad(const std::vector<Param*>& params);

// Bias-corrected Adam. Moment buffers are lazily shaped to the parameter
// list handed to the first step() call.
class Adam {
  public:
    double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    int64_t t = 0;

    explicit Adam(double lr_ = 1e-3) : lr(lr_) {}

    void step(const std::vector<Param*>& params);

  private:
    std::vector<Tensor> m_, v_;
};

}  // namespace fsa::ad

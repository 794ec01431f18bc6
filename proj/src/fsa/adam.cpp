#include "fsa/adam.hpp"

#include <cmath>

#include "fsa/errors.hpp"

namespace fsa::ad {

void zero_grad(const std::vector<Param*>& params) {
    for (Param* p : params) std::fill(p->grad.data.begin(), p->grad.data.end(), 0.0);
}

void Adam::step(const std::vector<Param*>& params) {
    if (m_.empty()) {
        for (Param* p : params) {
            m_.push_back(Tensor::zeros(p->value.shape));
            v_.push_back(Tensor::zeros(p->value.shape));
        }
    }
    if (m_.size() != params.size()) throw NumericError("adam: parameter list changed");
    ++t;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (size_t k = 0; k < params.size(); ++k) {
        Param* p = params[k];
        for (int64_t i = 0; i < p->value.size(); ++i) {
            double g = p->grad.data[i];
            if (std::isnan(g)) throw NumericError("adam: NaN gradient in parameter " + p->name);
            m_[k].data[i] = beta1 * m_[k].data[i] + (1.0 - beta1) * g;
            v_[k].data[i] = beta2 * v_[k].data[i] + (1.0 - beta2) * g * g;
            double mhat = m_[k].data[i] / bc1;
            double vhat = v_[k].data[i] / bc2;
            p->value.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

}  // namespace fsa::ad

#include <cmath>

#include "aeae/models.hpp"

namespace aeae {

AdamState::AdamState(const ParameterSet& params, AdamOptions options) : options_(options) {
  if (!(options_.learning_rate > 0.0)) throw std::invalid_argument("Adam: learning rate must be > 0");
  for (const auto& p : params) {
    first_.emplace_back(p.value.shape(), 0.0);
    second_.emplace_back(p.value.shape(), 0.0);
  }
}

void AdamState::step(ParameterSet& params, std::span<const Tensor> grads) {
  if (params.size() != first_.size() || grads.size() != first_.size()) {
    throw std::invalid_argument("Adam: parameter/gradient count mismatch");
  }
  ++step_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& w = params[i].value;
    const Tensor& g = grads[i];
    require_same_shape(w, g, "Adam step");
    Tensor& m = first_[i];
    Tensor& v = second_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      w[j] -= options_.learning_rate * m_hat / (std::sqrt(v_hat) + options_.epsilon);
    }
  }
}

}  // namespace aeae

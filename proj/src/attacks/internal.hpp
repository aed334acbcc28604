#pragma once

#include "aeae/attacks.hpp"

namespace aeae {

/// Labels the adversarial image, computes norms and the success flag.
AdversarialResult finish_result(const DifferentiableClassifier& model, const Tensor& original,
                                Tensor adversarial, std::size_t original_label,
                                std::size_t iterations);

}  // namespace aeae

#include <algorithm>
#include <random>

#include "internal.hpp"

namespace aeae {
namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// Projection onto the L-inf ball around `origin` intersected with [0,1].
void project(Tensor& x, const Tensor& origin, double epsilon) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lo = std::max(0.0, origin[i] - epsilon);
    const double hi = std::min(1.0, origin[i] + epsilon);
    x[i] = std::clamp(std::min(std::max(x[i], origin[i] - epsilon), origin[i] + epsilon), lo, hi);
  }
}

void require_budget(double epsilon, double alpha, std::size_t iterations) {
  if (!(epsilon >= 0.0)) throw std::invalid_argument("epsilon must be >= 0");
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be > 0");
  if (iterations < 1) throw std::invalid_argument("iterations must be >= 1");
}

// Shared BIM/PGD loop: signed-gradient ascent with projection after each step.
Tensor iterate_signed_steps(const DifferentiableClassifier& model, const Tensor& origin,
                            Tensor x, std::size_t label, double epsilon, double alpha,
                            std::size_t iterations) {
  for (std::size_t step = 0; step < iterations; ++step) {
    const Tensor grad = loss_input_gradient(model, x, label);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += alpha * sign(grad[i]);
    project(x, origin, epsilon);
  }
  return x;
}

}  // namespace

AdversarialResult fgsm(const DifferentiableClassifier& model, const Tensor& image,
                       std::size_t label, double epsilon) {
  if (!(epsilon >= 0.0)) throw std::invalid_argument("epsilon must be >= 0");
  const std::size_t predicted = model.predict_label(image);
  const Tensor grad = loss_input_gradient(model, image, label);
  Tensor x = image;
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = std::clamp(image[i] + epsilon * sign(grad[i]), 0.0, 1.0);
  }
  return finish_result(model, image, std::move(x), predicted, 1);
}

AdversarialResult bim(const DifferentiableClassifier& model, const Tensor& image,
                      std::size_t label, double epsilon, double alpha, std::size_t iterations) {
  require_budget(epsilon, alpha, iterations);
  const std::size_t predicted = model.predict_label(image);
  Tensor x = iterate_signed_steps(model, image, image, label, epsilon, alpha, iterations);
  return finish_result(model, image, std::move(x), predicted, iterations);
}

AdversarialResult pgd(const DifferentiableClassifier& model, const Tensor& image,
                      std::size_t label, double epsilon, double alpha, std::size_t iterations,
                      std::uint64_t seed) {
  require_budget(epsilon, alpha, iterations);
  const std::size_t predicted = model.predict_label(image);
  std::mt19937_64 rng(seed);
  Tensor start = image;
  for (std::size_t i = 0; i < start.size(); ++i) {
    const double lo = std::max(0.0, image[i] - epsilon);
    const double hi = std::min(1.0, image[i] + epsilon);
    start[i] = hi > lo ? std::uniform_real_distribution<double>(lo, hi)(rng) : image[i];
  }
  Tensor x = iterate_signed_steps(model, image, std::move(start), label, epsilon, alpha,
                                  iterations);
  return finish_result(model, image, std::move(x), predicted, iterations);
}

}  // namespace aeae

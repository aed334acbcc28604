#include <algorithm>
#include <cmath>
#include <limits>

#include "internal.hpp"

namespace aeae {
namespace {

constexpr double kDegenerateNorm = 1e-12;

struct Linearization {
  Tensor step;
  bool degenerate = true;
};

Linearization minimal_step(const DifferentiableClassifier& model, const Tensor& x,
                           std::size_t label) {
  const std::size_t k = model.class_count();
  if (k < 2) throw std::invalid_argument("DeepFool needs at least two classes");
  if (label >= k) throw std::out_of_range("DeepFool label out of range");
  Linearization best;
  double best_distance = std::numeric_limits<double>::infinity();
  for (std::size_t cls = 0; cls < k; ++cls) {
    if (cls == label) continue;
    // w = grad(Z_cls - Z_label), f = Z_cls - Z_label
    Tensor seed(Shape{k}, 0.0);
    seed[cls] = 1.0;
    seed[label] = -1.0;
    Tensor logits;
    Tensor w = model.logits_vjp(x, seed, &logits);
    const double f = logits[cls] - logits[label];
    double norm_sq = 0.0;
    for (double v : w.values()) norm_sq += v * v;
    if (std::sqrt(norm_sq) < kDegenerateNorm) continue;
    const double distance = std::abs(f) / std::sqrt(norm_sq);
    if (distance < best_distance) {
      best_distance = distance;
      const double coef = std::abs(f) / norm_sq;
      for (double& v : w.values()) v *= coef;
      best.step = std::move(w);
      best.degenerate = false;
    }
  }
  return best;
}

}  // namespace

Tensor deepfool_step(const DifferentiableClassifier& model, const Tensor& image,
                     std::size_t label) {
  Linearization lin = minimal_step(model, image, label);
  if (lin.degenerate) {
    throw AttackError("DeepFool: all class-difference gradients vanish; no progress possible");
  }
  return std::move(lin.step);
}

AdversarialResult deepfool(const DifferentiableClassifier& model, const Tensor& image,
                           std::size_t max_iterations, double overshoot,
                           std::optional<std::size_t> true_label) {
  if (max_iterations < 1) throw std::invalid_argument("DeepFool needs >= 1 iteration");
  const std::size_t original = model.predict_label(image);
  if (true_label && *true_label != original) {
    return finish_result(model, image, image, original, 0);
  }
  Tensor total(image.shape(), 0.0);
  Tensor x = image;
  std::size_t used = 0;
  bool progressed = false;
  while (used < max_iterations && model.predict_label(x) == original) {
    Linearization lin = minimal_step(model, x, original);
    ++used;
    if (lin.degenerate) continue;
    progressed = true;
    for (std::size_t i = 0; i < total.size(); ++i) total[i] += lin.step[i];
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = std::clamp(image[i] + (1.0 + overshoot) * total[i], 0.0, 1.0);
    }
  }
  if (!progressed && used > 0) {
    throw AttackError("DeepFool: no progress after " + std::to_string(used) +
                      " iterations (degenerate gradients)");
  }
  return finish_result(model, image, std::move(x), original, used);
}

}  // namespace aeae

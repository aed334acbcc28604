#include <algorithm>
#include <cmath>

#include "aeae/attacks.hpp"
#include "internal.hpp"

namespace aeae {

std::string to_string(AttackMethod method) {
  switch (method) {
    case AttackMethod::FGSM: return "fgsm";
    case AttackMethod::BIM: return "bim";
    case AttackMethod::PGD: return "pgd";
    case AttackMethod::DeepFool: return "deepfool";
    case AttackMethod::CWL2: return "cw_l2";
  }
  return "unknown";
}

AttackMethod parse_attack_method(const std::string& name) {
  std::string lower = name;
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "fgsm") return AttackMethod::FGSM;
  if (lower == "bim") return AttackMethod::BIM;
  if (lower == "pgd") return AttackMethod::PGD;
  if (lower == "deepfool") return AttackMethod::DeepFool;
  if (lower == "cw_l2" || lower == "cwl2" || lower == "cw") return AttackMethod::CWL2;
  throw std::invalid_argument("unknown attack method '" + name + "'");
}

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0)) throw std::invalid_argument("attack epsilon must be >= 0");
  if (iterations < 1) throw std::invalid_argument("attack iterations must be >= 1");
  const bool iterative = method == AttackMethod::BIM || method == AttackMethod::PGD;
  if (iterative && !(alpha > 0.0)) throw std::invalid_argument("attack alpha must be > 0");
  if (method == AttackMethod::CWL2) {
    if (search_steps < 1 || cw_steps < 1) throw std::invalid_argument("C&W needs >= 1 step");
    if (!(initial_c > 0.0) || !(cw_learning_rate > 0.0)) {
      throw std::invalid_argument("C&W constant and learning rate must be > 0");
    }
  }
  if (method == AttackMethod::DeepFool && !(overshoot >= 0.0)) {
    throw std::invalid_argument("DeepFool overshoot must be >= 0");
  }
}

LpNorms lp_norms(const Tensor& original, const Tensor& adversarial) {
  require_same_shape(original, adversarial, "lp_norms");
  if (original.empty()) return {};
  LpNorms n;
  std::size_t changed = 0;
  double sq = 0.0;
  for (std::size_t i = 0; i < original.size(); ++i) {
    const double d = std::abs(adversarial[i] - original[i]);
    if (d > 1e-12) ++changed;
    sq += d * d;
    n.linf = std::max(n.linf, d);
  }
  n.l0_fraction = static_cast<double>(changed) / static_cast<double>(original.size());
  n.l2 = std::sqrt(sq);
  return n;
}

Tensor loss_input_gradient(const DifferentiableClassifier& model, const Tensor& image,
                           std::size_t label) {
  if (label >= model.class_count()) throw std::out_of_range("attack label out of range");
  return model.input_gradient(image, [label](const Tensor& logits) {
    Tensor seed = softmax_rows(logits);  // d CE / d logits = softmax - one_hot
    seed[label] -= 1.0;
    return seed;
  });
}

AdversarialResult finish_result(const DifferentiableClassifier& model, const Tensor& original,
                                Tensor adversarial, std::size_t original_label,
                                std::size_t iterations) {
  AdversarialResult r;
  r.original = original;
  r.original_label = original_label;
  r.adversarial_label = model.predict_label(adversarial);
  r.success = r.adversarial_label != original_label;
  r.norms = lp_norms(original, adversarial);
  r.adversarial = std::move(adversarial);
  r.iterations_used = iterations;
  return r;
}

}  // namespace aeae

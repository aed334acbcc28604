#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "aeae/models.hpp"

namespace aeae {

enum class AttackMethod { FGSM, BIM, PGD, DeepFool, CWL2 };

std::string to_string(AttackMethod method);
AttackMethod parse_attack_method(const std::string& name);

/// Knobs for all five attacks; each method reads the fields it needs.
struct AttackConfig {
  std::string name;  ///< label used in reports, e.g. "fgsm_0.1"
  AttackMethod method = AttackMethod::FGSM;
  double epsilon = 0.1;             ///< L-inf budget (FGSM/BIM/PGD)
  double alpha = 1.0 / 255.0;       ///< per-step size (BIM/PGD)
  std::size_t iterations = 100;     ///< BIM/PGD steps, DeepFool max iterations
  double overshoot = 0.02;          ///< DeepFool
  double confidence = 0.0;          ///< C&W margin k
  double initial_c = 1.0;           ///< C&W trade-off constant
  std::size_t search_steps = 5;     ///< C&W binary-search rounds over c
  std::size_t cw_steps = 200;       ///< C&W optimiser steps per round
  double cw_learning_rate = 0.01;
  std::optional<std::size_t> target;  ///< C&W targeted mode
  std::uint64_t seed = 0;           ///< PGD random starts

  void validate() const;
};

struct LpNorms {
  double l0_fraction = 0.0;  ///< fraction of components with |delta_i| > 1e-12
  double l2 = 0.0;
  double linf = 0.0;
};

LpNorms lp_norms(const Tensor& original, const Tensor& adversarial);

struct AdversarialResult {
  Tensor original;
  Tensor adversarial;
  std::size_t original_label = 0;     ///< classifier prediction on the original
  std::size_t adversarial_label = 0;  ///< classifier prediction on the adversarial
  bool success = false;
  LpNorms norms;
  std::size_t iterations_used = 0;
};

/// Raised when an attack cannot make progress (e.g. vanishing gradients).
class AttackError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Gradient of the cross-entropy loss with respect to the input image.
Tensor loss_input_gradient(const DifferentiableClassifier& model, const Tensor& image,
                           std::size_t label);

AdversarialResult fgsm(const DifferentiableClassifier& model, const Tensor& image,
                       std::size_t label, double epsilon);
AdversarialResult bim(const DifferentiableClassifier& model, const Tensor& image,
                      std::size_t label, double epsilon, double alpha, std::size_t iterations);
AdversarialResult pgd(const DifferentiableClassifier& model, const Tensor& image,
                      std::size_t label, double epsilon, double alpha, std::size_t iterations,
                      std::uint64_t seed);

/// Smallest perturbation that moves the linearisation of the classifier at
/// `image` onto the nearest boundary between `label` and another class.
Tensor deepfool_step(const DifferentiableClassifier& model, const Tensor& image,
                     std::size_t label);
/// Returns immediately (zero iterations, no perturbation) when `true_label`
/// is given and the image is already misclassified.
AdversarialResult deepfool(const DifferentiableClassifier& model, const Tensor& image,
                           std::size_t max_iterations, double overshoot,
                           std::optional<std::size_t> true_label = std::nullopt);

/// Targeted margin penalty max(max_{i != t} Z_i - Z_t, -k).
double cw_penalty(std::span<const double> logits, std::size_t target, double confidence);
/// Untargeted margin penalty max(Z_y - max_{i != y} Z_i, -k).
double cw_untargeted_penalty(std::span<const double> logits, std::size_t true_label,
                             double confidence);

struct CwOptions {
  std::optional<std::size_t> target;
  double confidence = 0.0;
  double initial_c = 1.0;
  std::size_t search_steps = 5;
  std::size_t steps = 200;
  double learning_rate = 0.01;
};

AdversarialResult cw_l2(const DifferentiableClassifier& model, const Tensor& image,
                        const CwOptions& options);

/// Dispatches on config.method. `example_index` offsets the PGD seed.
AdversarialResult run_attack(const DifferentiableClassifier& model, const Tensor& image,
                             std::size_t label, const AttackConfig& config,
                             std::size_t example_index = 0);

struct AttackRun {
  AttackConfig config;
  std::vector<AdversarialResult> results;  ///< one per attacked image, in input order
  std::vector<std::size_t> source_index;   ///< dataset index of each attacked image

  std::size_t success_count() const;
  std::vector<const AdversarialResult*> successes() const;
};

/// Per-attack averages over successful examples only.
struct AttackSummaryRow {
  std::string name;
  AttackMethod method;
  std::size_t attempted = 0;
  std::size_t succeeded = 0;
  double success_rate = 0.0;
  LpNorms mean_norms;
};

struct AttackSuite {
  std::vector<AttackRun> runs;
  std::vector<AttackSummaryRow> summary;  ///< only attacks with >= 1 success
  std::vector<std::string> warnings;
};

AttackSummaryRow summarize(const AttackRun& run);

AttackSuite generate_suite(const DifferentiableClassifier& model, std::span<const Tensor> images,
                           std::span<const std::size_t> labels,
                           std::span<const AttackConfig> configs);

}  // namespace aeae

#include "internal.hpp"

namespace aeae {

AdversarialResult run_attack(const DifferentiableClassifier& model, const Tensor& image,
                             std::size_t label, const AttackConfig& config,
                             std::size_t example_index) {
  config.validate();
  switch (config.method) {
    case AttackMethod::FGSM:
      return fgsm(model, image, label, config.epsilon);
    case AttackMethod::BIM:
      return bim(model, image, label, config.epsilon, config.alpha, config.iterations);
    case AttackMethod::PGD:
      return pgd(model, image, label, config.epsilon, config.alpha, config.iterations,
                 config.seed + example_index);
    case AttackMethod::DeepFool:
      return deepfool(model, image, config.iterations, config.overshoot, label);
    case AttackMethod::CWL2: {
      CwOptions opts;
      opts.target = config.target;
      opts.confidence = config.confidence;
      opts.initial_c = config.initial_c;
      opts.search_steps = config.search_steps;
      opts.steps = config.cw_steps;
      opts.learning_rate = config.cw_learning_rate;
      return cw_l2(model, image, opts);
    }
  }
  throw std::invalid_argument("unknown attack method");
}

std::size_t AttackRun::success_count() const {
  std::size_t n = 0;
  for (const auto& r : results) n += r.success ? 1 : 0;
  return n;
}

std::vector<const AdversarialResult*> AttackRun::successes() const {
  std::vector<const AdversarialResult*> out;
  for (const auto& r : results) {
    if (r.success) out.push_back(&r);
  }
  return out;
}

AttackSummaryRow summarize(const AttackRun& run) {
  AttackSummaryRow row;
  row.name = run.config.name;
  row.method = run.config.method;
  row.attempted = run.results.size();
  for (const auto* r : run.successes()) {
    ++row.succeeded;
    row.mean_norms.l0_fraction += r->norms.l0_fraction;
    row.mean_norms.l2 += r->norms.l2;
    row.mean_norms.linf += r->norms.linf;
  }
  if (row.succeeded > 0) {
    const double n = static_cast<double>(row.succeeded);
    row.mean_norms.l0_fraction /= n;
    row.mean_norms.l2 /= n;
    row.mean_norms.linf /= n;
  }
  row.success_rate = row.attempted ? static_cast<double>(row.succeeded) /
                                         static_cast<double>(row.attempted)
                                   : 0.0;
  return row;
}

AttackSuite generate_suite(const DifferentiableClassifier& model, std::span<const Tensor> images,
                           std::span<const std::size_t> labels,
                           std::span<const AttackConfig> configs) {
  if (images.empty()) throw std::invalid_argument("generate_suite: empty dataset");
  if (labels.size() != images.size()) {
    throw std::invalid_argument("generate_suite: label count does not match image count");
  }
  AttackSuite suite;
  for (const AttackConfig& config : configs) {
    config.validate();
    AttackRun run;
    run.config = config;
    for (std::size_t i = 0; i < images.size(); ++i) {
      AdversarialResult result;
      try {
        result = run_attack(model, images[i], labels[i], config, i);
      } catch (const AttackError& e) {
        suite.warnings.push_back(config.name + ": example " + std::to_string(i) + ": " + e.what());
        result.original = images[i];
        result.adversarial = images[i];
        result.original_label = result.adversarial_label = model.predict_label(images[i]);
      }
      run.results.push_back(std::move(result));
      run.source_index.push_back(i);
    }
    if (run.success_count() == 0) {
      suite.warnings.push_back(config.name + ": no successful adversarial examples; excluded");
    } else {
      suite.summary.push_back(summarize(run));
    }
    suite.runs.push_back(std::move(run));
  }
  return suite;
}

}  // namespace aeae

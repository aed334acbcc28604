#include <algorithm>
#include <cmath>
#include <limits>

#include "internal.hpp"

namespace aeae {
namespace {

// Largest logit excluding `skip`.
std::size_t best_other(std::span<const double> z, std::size_t skip) {
  std::size_t best = skip == 0 ? 1 : 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (i != skip && z[i] > z[best]) best = i;
  }
  return best;
}

struct Margin {
  double penalty;    // g(x')
  double margin;     // how far the desired class leads, >= k means adversarial
  Tensor seed;       // d g / d logits
};

Margin evaluate_margin(const Tensor& logits, std::size_t anchor, bool targeted,
                       double confidence) {
  const auto z = logits.data();
  const std::size_t other = best_other(z, anchor);
  // Targeted: the target (anchor) must lead; untargeted: the true class (anchor) must trail.
  const double gap = targeted ? z[other] - z[anchor] : z[anchor] - z[other];
  Margin m{std::max(gap, -confidence), -gap, Tensor(logits.shape(), 0.0)};
  if (gap > -confidence) {
    m.seed[other] = targeted ? 1.0 : -1.0;
    m.seed[anchor] = targeted ? -1.0 : 1.0;
  }
  return m;
}

}  // namespace

double cw_penalty(std::span<const double> logits, std::size_t target, double confidence) {
  if (target >= logits.size() || logits.size() < 2) throw std::out_of_range("C&W target");
  const std::size_t other = best_other(logits, target);
  return std::max(logits[other] - logits[target], -confidence);
}

double cw_untargeted_penalty(std::span<const double> logits, std::size_t true_label,
                             double confidence) {
  if (true_label >= logits.size() || logits.size() < 2) throw std::out_of_range("C&W label");
  const std::size_t other = best_other(logits, true_label);
  return std::max(logits[true_label] - logits[other], -confidence);
}

AdversarialResult cw_l2(const DifferentiableClassifier& model, const Tensor& image,
                        const CwOptions& options) {
  if (options.search_steps < 1 || options.steps < 1) {
    throw std::invalid_argument("C&W needs at least one search round and one step");
  }
  const std::size_t original = model.predict_label(image);
  const bool targeted = options.target.has_value();
  if (targeted) {
    if (*options.target >= model.class_count()) throw std::out_of_range("C&W target");
    if (*options.target == original) {
      throw std::invalid_argument("C&W target equals the current label");
    }
  }
  const std::size_t anchor = targeted ? *options.target : original;
  const std::size_t n = image.size();

  // Box constraint through x' = (tanh(w) + 1) / 2.
  Tensor w0(image.shape());
  for (std::size_t i = 0; i < n; ++i) {
    w0[i] = std::atanh(std::clamp(2.0 * image[i] - 1.0, -1.0 + 1e-6, 1.0 - 1e-6));
  }

  double lower = 0.0, upper = 1e10, c = options.initial_c;
  double best_l2 = std::numeric_limits<double>::infinity();
  Tensor best_adv;
  double best_penalty = std::numeric_limits<double>::infinity();
  Tensor fallback = image;
  std::size_t total_steps = 0;

  const AdamOptions adam{.learning_rate = options.learning_rate};
  for (std::size_t round = 0; round < options.search_steps; ++round) {
    Tensor w = w0;
    Tensor m(w.shape(), 0.0), v(w.shape(), 0.0);
    bool found = false;
    double previous = std::numeric_limits<double>::infinity();
    const std::size_t check_every = std::max<std::size_t>(1, options.steps / 10);

    for (std::size_t step = 0; step < options.steps; ++step) {
      ++total_steps;
      Tensor xp(w.shape());
      Tensor th(w.shape());
      for (std::size_t i = 0; i < n; ++i) {
        th[i] = std::tanh(w[i]);
        xp[i] = 0.5 * (th[i] + 1.0);
      }
      Margin margin;
      Tensor logits;
      Tensor grad_g = model.input_gradient(
          xp,
          [&](const Tensor& z) {
            margin = evaluate_margin(z, anchor, targeted, options.confidence);
            return margin.seed;
          },
          &logits);

      double dist = 0.0;
      for (std::size_t i = 0; i < n; ++i) dist += (xp[i] - image[i]) * (xp[i] - image[i]);
      const double loss = dist + c * margin.penalty;

      const std::size_t label = argmax(logits.data());
      const bool adversarial = (targeted ? label == anchor : label != anchor) &&
                               margin.margin >= options.confidence;
      if (adversarial) {
        found = true;
        if (dist < best_l2) {
          best_l2 = dist;
          best_adv = xp;
        }
      } else if (margin.penalty < best_penalty) {
        best_penalty = margin.penalty;
        fallback = xp;
      }

      // Adam step on w.
      const double t = static_cast<double>(step + 1);
      const double corr1 = 1.0 - std::pow(adam.beta1, t);
      const double corr2 = 1.0 - std::pow(adam.beta2, t);
      for (std::size_t i = 0; i < n; ++i) {
        const double gx = 2.0 * (xp[i] - image[i]) + c * grad_g[i];
        const double gw = gx * 0.5 * (1.0 - th[i] * th[i]);
        m[i] = adam.beta1 * m[i] + (1.0 - adam.beta1) * gw;
        v[i] = adam.beta2 * v[i] + (1.0 - adam.beta2) * gw * gw;
        w[i] -= adam.learning_rate * (m[i] / corr1) / (std::sqrt(v[i] / corr2) + adam.epsilon);
      }

      if ((step + 1) % check_every == 0) {
        if (loss > previous * 0.9999) break;  // stalled
        previous = loss;
      }
    }

    if (found) {
      upper = std::min(upper, c);
      c = 0.5 * (lower + upper);
    } else {
      lower = std::max(lower, c);
      c = upper < 1e9 ? 0.5 * (lower + upper) : c * 10.0;
    }
  }

  Tensor result = best_adv.empty() ? std::move(fallback) : std::move(best_adv);
  return finish_result(model, image, std::move(result), original, total_steps);
}

}  // namespace aeae

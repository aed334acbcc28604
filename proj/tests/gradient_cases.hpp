#pragma once

#include <string>

#include "test_support.hpp"

namespace aeae::testing {

struct GradientCase {
  std::string name;
  LossBuilder build;
  std::function<Tensor(std::mt19937_64&)> sample;
};

namespace detail {

// Scalar head that weights every output element differently, so a wrong
// gradient cannot hide behind symmetry.
inline Var weighted_head(Tape& t, Var y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Var target = t.constant(random_tensor(y.shape(), rng));
  return ops::mse(y, target);
}

inline std::function<Tensor(std::mt19937_64&)> uniform(Shape shape, double lo = -1.0,
                                                       double hi = 1.0) {
  return [shape, lo, hi](std::mt19937_64& rng) { return random_tensor(shape, rng, lo, hi); };
}

}  // namespace detail

/// Every differentiable primitive, each as a scalar loss of one
/// differentiable argument plus a sampler for that argument.
inline std::vector<GradientCase> primitive_gradient_cases() {
  using detail::uniform;
  using detail::weighted_head;
  std::mt19937_64 rng(42);
  std::vector<GradientCase> cases;
  auto fixed = [&](Shape s, double lo = -1.0, double hi = 1.0) {
    return random_tensor(std::move(s), rng, lo, hi);
  };

  const Tensor kernel = fixed({2, 2, 3, 3});
  cases.push_back({"conv2d input", [=](Tape& t, Var x) {
                     return weighted_head(t, ops::conv2d(x, t.constant(kernel), 1, 1), 1);
                   },
                   uniform({1, 2, 4, 4})});
  const Tensor conv_in = fixed({2, 2, 5, 5});
  cases.push_back({"conv2d kernel, stride 2", [=](Tape& t, Var k) {
                     return weighted_head(t, ops::conv2d(t.constant(conv_in), k, 2, 1), 2);
                   },
                   uniform({3, 2, 3, 3})});
  const Tensor bias_in = fixed({2, 3, 2, 2});
  cases.push_back({"add_bias", [=](Tape& t, Var b) {
                     return weighted_head(t, ops::add_bias(t.constant(bias_in), b), 3);
                   },
                   uniform({3})});
  cases.push_back({"maxpool2d",
                   [](Tape& t, Var x) { return weighted_head(t, ops::maxpool2d(x, 2), 4); },
                   uniform({1, 2, 4, 4})});
  cases.push_back({"upsample2d",
                   [](Tape& t, Var x) { return weighted_head(t, ops::upsample2d(x, 2), 5); },
                   uniform({1, 2, 2, 3})});
  const Tensor w = fixed({4, 5}), b = fixed({4}), x0 = fixed({3, 5});
  cases.push_back({"dense input", [=](Tape& t, Var x) {
                     return weighted_head(t, ops::dense(x, t.constant(w), t.constant(b)), 6);
                   },
                   uniform({3, 5})});
  cases.push_back({"dense weight", [=](Tape& t, Var wv) {
                     return weighted_head(t, ops::dense(t.constant(x0), wv, t.constant(b)), 7);
                   },
                   uniform({4, 5})});
  cases.push_back({"dense bias", [=](Tape& t, Var bv) {
                     return weighted_head(t, ops::dense(t.constant(x0), t.constant(w), bv), 8);
                   },
                   uniform({4})});
  cases.push_back({"relu", [](Tape& t, Var x) { return weighted_head(t, ops::relu(x), 9); },
                   uniform({12})});
  cases.push_back({"sigmoid", [](Tape& t, Var x) { return weighted_head(t, ops::sigmoid(x), 10); },
                   uniform({12}, -4, 4)});
  cases.push_back({"tanh", [](Tape& t, Var x) { return weighted_head(t, ops::tanh(x), 11); },
                   uniform({12}, -3, 3)});
  cases.push_back({"softmax", [](Tape& t, Var x) { return weighted_head(t, ops::softmax(x), 12); },
                   uniform({3, 6}, -3, 3)});
  cases.push_back({"cross_entropy",
                   [](Tape&, Var x) {
                     return ops::cross_entropy(x, std::vector<std::size_t>{0, 4, 2});
                   },
                   uniform({3, 5}, -3, 3)});
  const Tensor other = fixed({2, 3});
  cases.push_back({"mse, add, sub, scale, add_scalar, reshape, sum",
                   [=](Tape& t, Var x) {
                     Var c = t.constant(other);
                     Var y = ops::add_scalar(
                         ops::scale(ops::sub(ops::add(x, c), ops::scale(c, 0.3)), 1.7), 0.2);
                     return ops::add(ops::mse(ops::reshape(y, {6}), ops::reshape(ops::tanh(c), {6})),
                                     ops::scale(ops::sum(ops::sigmoid(x)), 0.1));
                   },
                   uniform({2, 3})});

  return cases;
}

/// Worst relative error over `points` kink-free draws of one case.
inline double worst_case_error(const GradientCase& c, std::size_t points, std::uint64_t seed,
                               std::size_t* rejected = nullptr) {
  std::mt19937_64 rng(seed);
  return worst_gradient_error(c.build, [&] { return c.sample(rng); }, points, rejected);
}

}  // namespace aeae::testing

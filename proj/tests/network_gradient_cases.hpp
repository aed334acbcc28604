#pragma once

#include <memory>

#include "aeae/models.hpp"
#include "gradient_cases.hpp"

namespace aeae::testing {

/// Both networks, differentiated with respect to the image and to parameters.
inline std::vector<GradientCase> network_gradient_cases() {
  using detail::uniform;
  std::mt19937_64 rng(43);
  std::vector<GradientCase> cases;
  auto fixed = [&](Shape s, double lo = -1.0, double hi = 1.0) {
    return random_tensor(std::move(s), rng, lo, hi);
  };

  // Full networks. Models live behind shared_ptr so the builders stay copyable.
  const auto clf = std::make_shared<ClassifierModel>(
      ClassifierModel::build(ClassifierArch{{1, 8, 8}, 2, 3, 3}, 5));
  cases.push_back({"classifier, image", [clf](Tape& t, Var x) {
                     auto params = bind_parameters(t, clf->parameters(), false);
                     return ops::cross_entropy(clf->forward(t, x, params), std::size_t{1});
                   },
                   uniform({1, 1, 8, 8}, 0, 1)});
  const Tensor clf_img = fixed({1, 1, 8, 8}, 0, 1);
  cases.push_back({"classifier, first kernel", [clf, clf_img](Tape& t, Var k) {
                     auto params = bind_parameters(t, clf->parameters(), false);
                     params[0] = k;
                     return ops::cross_entropy(clf->forward(t, t.constant(clf_img), params),
                                               std::size_t{2});
                   },
                   uniform(clf->parameters()[0].value.shape(), -0.5, 0.5)});
  cases.push_back({"classifier, head weight", [clf, clf_img](Tape& t, Var hw) {
                     auto params = bind_parameters(t, clf->parameters(), false);
                     params[params.size() - 2] = hw;
                     return ops::cross_entropy(clf->forward(t, t.constant(clf_img), params),
                                               std::size_t{0});
                   },
                   uniform(clf->parameters()[clf->parameters().size() - 2].value.shape())});
  const auto ae = std::make_shared<AutoencoderModel>(AutoencoderModel::build({1, 4, 4}, 3, 7));
  cases.push_back({"autoencoder, image", [ae](Tape& t, Var x) {
                     auto params = bind_parameters(t, ae->parameters(), false);
                     return ops::mse(ae->forward(t, x, params), x);
                   },
                   uniform({1, 1, 4, 4}, 0, 1)});
  const Tensor ae_img = fixed({2, 1, 4, 4}, 0, 1);
  cases.push_back({"autoencoder, middle kernel", [ae, ae_img](Tape& t, Var k) {
                     auto params = bind_parameters(t, ae->parameters(), false);
                     params[2] = k;
                     Var img = t.constant(ae_img);
                     return ops::mse(ae->forward(t, img, params), img);
                   },
                   uniform(ae->parameters()[2].value.shape(), -0.5, 0.5)});
  return cases;
}

}  // namespace aeae::testing

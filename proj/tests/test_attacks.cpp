#include <doctest.h>

#include <cmath>
#include <random>

#include "aeae/attacks.hpp"
#include "aeae/dataset.hpp"
#include "test_support.hpp"

using namespace aeae;
using aeae::testing::random_tensor;

namespace {

// Records every image the attack differentiates at, i.e. every iterate.
class RecordingClassifier : public DifferentiableClassifier {
 public:
  explicit RecordingClassifier(const DifferentiableClassifier& inner) : inner_(inner) {}
  std::size_t class_count() const override { return inner_.class_count(); }
  Shape image_shape() const override { return inner_.image_shape(); }
  Tensor logits(const Tensor& image) const override { return inner_.logits(image); }
  Tensor input_gradient(const Tensor& image, const SeedFn& seed,
                        Tensor* logits_out = nullptr) const override {
    queried.push_back(image);
    return inner_.input_gradient(image, seed, logits_out);
  }
  mutable std::vector<Tensor> queried;

 private:
  const DifferentiableClassifier& inner_;
};

struct Trained {
  ClassifierModel model;
  Dataset data;
};

const Trained& trained() {
  static const Trained t = [] {
    Dataset train = synth_dataset("shapes", 400, 11);
    ClassifierModel m = ClassifierModel::build({ImageShape{1, 16, 16}, 4, 8, 10}, 3);
    TrainConfig cfg{.learning_rate = 0.01, .batch_size = 32, .epochs = 4, .seed = 5};
    train_classifier(m, train.images, train.labels, cfg);
    return Trained{std::move(m), synth_dataset("shapes", 24, 12)};
  }();
  return t;
}

LinearClassifier affine_pair() {
  Tensor w(Shape{2, 2}, {0.0, 0.0, 3.0, 4.0});
  return LinearClassifier(Shape{2}, std::move(w), Tensor(Shape{2}, 0.0));
}

void require_in_ball(const Tensor& x, const Tensor& origin, double eps) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    REQUIRE(std::abs(x[i] - origin[i]) <= eps + 1e-9);
    REQUIRE(x[i] >= 0.0);
    REQUIRE(x[i] <= 1.0);
  }
}

}  // namespace

TEST_CASE("lp_norms examples") {
  const Tensor a(Shape{3}, 0.0);
  const LpNorms zero = lp_norms(a, a);
  CHECK(zero.l0_fraction == 0.0);
  CHECK(zero.l2 == 0.0);
  CHECK(zero.linf == 0.0);

  const LpNorms n = lp_norms(a, Tensor(Shape{3}, {0.3, 0.0, -0.4}));
  CHECK(n.l0_fraction == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(n.l2 == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(n.linf == doctest::Approx(0.4).epsilon(1e-15));

  CHECK_THROWS(lp_norms(a, Tensor(Shape{4}, 0.0)));
}

TEST_CASE("attack config validation") {
  AttackConfig c;
  c.epsilon = -0.1;
  CHECK_THROWS(c.validate());
  c = AttackConfig{};
  c.iterations = 0;
  CHECK_THROWS(c.validate());
  c = AttackConfig{};
  c.method = AttackMethod::BIM;
  c.alpha = 0.0;
  CHECK_THROWS(c.validate());
  c.method = AttackMethod::FGSM;
  CHECK_NOTHROW(c.validate());
  for (auto m : {AttackMethod::FGSM, AttackMethod::BIM, AttackMethod::PGD,
                 AttackMethod::DeepFool, AttackMethod::CWL2}) {
    CHECK(parse_attack_method(to_string(m)) == m);
  }
  CHECK_THROWS(parse_attack_method("jsma"));
}

TEST_CASE("fgsm sign-step arithmetic") {
  // One output depending on pixel 0 only: d CE / d x0 is positive for label 0.
  Tensor w(Shape{2, 2}, {-1.0, 0.0, 1.0, 0.0});
  LinearClassifier model(Shape{2}, std::move(w), Tensor(Shape{2}, 0.0));
  const Tensor x(Shape{2}, {0.5, 0.5});
  const AdversarialResult r = fgsm(model, x, 0, 0.25);
  CHECK(r.adversarial[0] == 0.75);
  CHECK(r.adversarial[1] == 0.5);  // zero gradient leaves the pixel alone
  CHECK(r.iterations_used == 1);

  const AdversarialResult none = fgsm(model, x, 0, 0.0);
  CHECK(none.adversarial.values() == x.values());
  CHECK_FALSE(none.success);
}

TEST_CASE("fgsm moves every unclipped pixel by exactly epsilon") {
  const auto& t = trained();
  for (double eps : {0.05, 0.1, 0.3}) {
    for (std::size_t i = 0; i < t.data.size(); ++i) {
      const Tensor& x = t.data.images[i];
      const Tensor g = loss_input_gradient(t.model, x, t.data.labels[i]);
      const AdversarialResult r = fgsm(t.model, x, t.data.labels[i], eps);
      require_in_ball(r.adversarial, x, eps);
      for (std::size_t p = 0; p < x.size(); ++p) {
        if (g[p] == 0.0 || x[p] - eps < 0.0 || x[p] + eps > 1.0) continue;
        REQUIRE(std::abs(r.adversarial[p] - x[p]) == doctest::Approx(eps).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("bim and pgd iterates stay inside the ball and the pixel box") {
  const auto& t = trained();
  for (double eps : {0.0, 0.1, 0.3}) {
    for (std::size_t i = 0; i < 8; ++i) {
      const Tensor& x = t.data.images[i];
      RecordingClassifier rec(t.model);
      const AdversarialResult b = bim(rec, x, t.data.labels[i], eps, 0.02, 20);
      const AdversarialResult p = pgd(rec, x, t.data.labels[i], eps, 0.02, 20, 7 + i);
      REQUIRE(rec.queried.size() == 40);
      for (const Tensor& it : rec.queried) require_in_ball(it, x, eps);
      require_in_ball(b.adversarial, x, eps);
      require_in_ball(p.adversarial, x, eps);
      CHECK(b.norms.linf <= eps + 1e-9);
      CHECK(p.norms.linf <= eps + 1e-9);
      if (eps == 0.0) {
        CHECK(b.adversarial.values() == x.values());
        CHECK(p.adversarial.values() == x.values());
      }
    }
  }
}

TEST_CASE("bim with one step of size epsilon equals fgsm") {
  const auto& t = trained();
  for (double eps : {0.01, 0.1, 0.3}) {
    for (std::size_t i = 0; i < t.data.size(); ++i) {
      const auto& x = t.data.images[i];
      const auto f = fgsm(t.model, x, t.data.labels[i], eps);
      const auto b = bim(t.model, x, t.data.labels[i], eps, eps, 1);
      REQUIRE(f.adversarial.values() == b.adversarial.values());
      CHECK(f.success == b.success);
    }
  }
}

TEST_CASE("pgd is deterministic in its seed") {
  const auto& t = trained();
  const auto& x = t.data.images[0];
  const auto a = pgd(t.model, x, t.data.labels[0], 0.2, 0.01, 10, 42);
  const auto b = pgd(t.model, x, t.data.labels[0], 0.2, 0.01, 10, 42);
  const auto c = pgd(t.model, x, t.data.labels[0], 0.2, 0.01, 10, 43);
  CHECK(a.adversarial.values() == b.adversarial.values());
  CHECK(a.adversarial.values() != c.adversarial.values());
}

TEST_CASE("success flag and norms agree with the classifier") {
  const auto& t = trained();
  AttackConfig cfgs[3];
  cfgs[0].method = AttackMethod::FGSM;
  cfgs[0].epsilon = 0.2;
  cfgs[1].method = AttackMethod::DeepFool;
  cfgs[1].iterations = 50;
  cfgs[2].method = AttackMethod::CWL2;
  cfgs[2].search_steps = 2;
  cfgs[2].cw_steps = 50;
  for (const auto& cfg : cfgs) {
    for (std::size_t i = 0; i < 6; ++i) {
      const auto& x = t.data.images[i];
      const auto r = run_attack(t.model, x, t.data.labels[i], cfg, i);
      CHECK(r.original_label == t.model.predict_label(x));
      CHECK(r.adversarial_label == t.model.predict_label(r.adversarial));
      CHECK(r.success == (r.adversarial_label != r.original_label));
      const LpNorms n = lp_norms(x, r.adversarial);
      CHECK(r.norms.l2 == n.l2);
      CHECK(r.norms.linf == n.linf);
      CHECK(r.norms.l0_fraction == n.l0_fraction);
      for (double v : r.adversarial.values()) {
        REQUIRE(v >= 0.0);
        REQUIRE(v <= 1.0);
      }
    }
  }
}

TEST_CASE("deepfool solves an affine boundary in one exact step") {
  const LinearClassifier model = affine_pair();
  const Tensor x(Shape{2}, {3.0, 4.0});
  CHECK(model.predict_label(x) == 1);
  const Tensor step = deepfool_step(model, x, 1);
  CHECK(std::abs(step[0] + 3.0) < 1e-9);
  CHECK(std::abs(step[1] + 4.0) < 1e-9);
  Tensor moved(Shape{2}, {x[0] + step[0], x[1] + step[1]});
  const Tensor z = model.logits(moved);
  CHECK(std::abs(z[1] - z[0]) < 1e-9);

  // Random affine models: the step lands on the nearest boundary.
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 2 + trial % 4;
    LinearClassifier m(Shape{5}, random_tensor(Shape{k, 5}, rng), random_tensor(Shape{k}, rng));
    const Tensor p = random_tensor(Shape{5}, rng);
    const std::size_t label = m.predict_label(p);
    const Tensor s = deepfool_step(m, p, label);
    Tensor q = p;
    for (std::size_t i = 0; i < 5; ++i) q[i] += s[i];
    const Tensor zq = m.logits(q);
    double top_other = -INFINITY;
    for (std::size_t c = 0; c < k; ++c) {
      if (c != label) top_other = std::max(top_other, zq[c]);
    }
    REQUIRE(std::abs(zq[label] - top_other) < 1e-9);
  }
}

TEST_CASE("deepfool full attack on an affine model") {
  Tensor w(Shape{2, 2}, {0.0, 0.0, 3.0, 4.0});
  LinearClassifier model(Shape{2}, std::move(w), Tensor(Shape{2}, {0.0, -1.0}));
  const Tensor x(Shape{2}, {0.3, 0.4});
  const auto r = deepfool(model, x, 50, 0.02, 1);
  CHECK(r.success);
  CHECK(r.iterations_used == 1);
  // Exact step is (-0.18, -0.24); overshoot scales it by 1.02.
  CHECK(r.adversarial[0] == doctest::Approx(0.3 - 1.02 * 0.18).epsilon(1e-12));
  CHECK(r.adversarial[1] == doctest::Approx(0.4 - 1.02 * 0.24).epsilon(1e-12));

  const auto skip = deepfool(model, x, 50, 0.02, 0);
  CHECK(skip.iterations_used == 0);
  CHECK(skip.adversarial.values() == x.values());
  CHECK_FALSE(skip.success);
}

TEST_CASE("deepfool reports vanishing gradients") {
  LinearClassifier flat(Shape{3}, Tensor(Shape{3, 3}, 0.0), Tensor(Shape{3}, {1.0, 0.0, 0.0}));
  const Tensor x(Shape{3}, 0.5);
  CHECK_THROWS_AS(deepfool(flat, x, 5, 0.02), AttackError);
  CHECK_THROWS_AS(deepfool_step(flat, x, 0), AttackError);
  LinearClassifier single(Shape{3}, Tensor(Shape{1, 3}, 1.0), Tensor(Shape{1}, 0.0));
  CHECK_THROWS(deepfool(single, x, 5, 0.02));
}

TEST_CASE("C&W margin penalty examples") {
  const double a[] = {2.0, 5.0, 1.0};
  CHECK(cw_penalty(a, 0, 0.0) == 3.0);
  const double b[] = {5.0, 2.0, 1.0};
  CHECK(cw_penalty(b, 0, 1.0) == -1.0);
  CHECK(cw_untargeted_penalty(b, 0, 0.0) == 3.0);
  CHECK(cw_untargeted_penalty(a, 0, 10.0) == -3.0);
  CHECK_THROWS(cw_penalty(a, 3, 0.0));
}

TEST_CASE("C&W penalty below zero means the target leads by the margin") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int trial = 0; trial < 5000; ++trial) {
    double z[5];
    for (double& v : z) v = u(rng);
    const std::size_t t = trial % 5;
    const double k = trial % 3 == 0 ? 0.0 : std::abs(u(rng));
    const double g = cw_penalty(z, t, k);
    double lead = INFINITY;
    for (std::size_t i = 0; i < 5; ++i) {
      if (i != t) lead = std::min(lead, z[t] - z[i]);
    }
    REQUIRE(g >= -k);
    if (g < 0.0) REQUIRE(argmax(z) == t);
    REQUIRE((g == -k) == (lead >= k));
  }
}

TEST_CASE("C&W on an affine model") {
  std::mt19937_64 rng(21);
  LinearClassifier m(Shape{6}, random_tensor(Shape{3, 6}, rng), Tensor(Shape{3}, 0.0));
  const Tensor x = random_tensor(Shape{6}, rng, 0.3, 0.7);
  const std::size_t label = m.predict_label(x);

  const auto un = cw_l2(m, x, CwOptions{});
  CHECK(un.success);
  for (double v : un.adversarial.values()) CHECK((v >= 0.0 && v <= 1.0));

  const std::size_t target = (label + 1) % 3;
  CwOptions targeted;
  targeted.target = target;
  targeted.confidence = 0.05;
  const auto tr = cw_l2(m, x, targeted);
  const Tensor z = m.logits(tr.adversarial);
  if (tr.success) {
    CHECK(tr.adversarial_label == target);
    CHECK(cw_penalty(z.data(), target, 0.05) == -0.05);
  }
  CwOptions same;
  same.target = label;
  CHECK_THROWS(cw_l2(m, x, same));
}

TEST_CASE("C&W without success returns the closest attempt") {
  // Two classes that no box-constrained image can swap.
  Tensor w(Shape{2, 2}, 0.0);
  LinearClassifier m(Shape{2}, std::move(w), Tensor(Shape{2}, {5.0, 0.0}));
  const Tensor x(Shape{2}, 0.5);
  CwOptions opts;
  opts.search_steps = 2;
  opts.steps = 20;
  const auto r = cw_l2(m, x, opts);
  CHECK_FALSE(r.success);
  CHECK(r.adversarial.size() == 2);
  CHECK(r.iterations_used > 0);
}

TEST_CASE("attack suite bookkeeping") {
  const auto& t = trained();
  std::vector<AttackConfig> cfgs(3);
  cfgs[0].name = "fgsm_0";
  cfgs[0].epsilon = 0.0;
  cfgs[1].name = "fgsm_0.3";
  cfgs[1].epsilon = 0.3;
  cfgs[2].name = "pgd_0.2";
  cfgs[2].method = AttackMethod::PGD;
  cfgs[2].epsilon = 0.2;
  cfgs[2].alpha = 0.02;
  cfgs[2].iterations = 15;
  const std::span<const Tensor> images(t.data.images.data(), 12);
  const std::span<const std::size_t> labels(t.data.labels.data(), 12);
  const AttackSuite s = generate_suite(t.model, images, labels, cfgs);

  REQUIRE(s.runs.size() == 3);
  CHECK(s.runs[0].success_count() == 0);
  REQUIRE(s.warnings.size() >= 1);
  CHECK(s.warnings.back().find("fgsm_0") != std::string::npos);

  std::size_t with_success = 0;
  for (const auto& run : s.runs) with_success += run.success_count() > 0;
  CHECK(s.summary.size() == with_success);

  for (const auto& row : s.summary) {
    const auto& run = *std::find_if(s.runs.begin(), s.runs.end(),
                                    [&](const AttackRun& r) { return r.config.name == row.name; });
    CHECK(row.attempted == 12);
    CHECK(row.succeeded == run.success_count());
    CHECK(row.success_rate == doctest::Approx(double(row.succeeded) / 12.0));
    double l0 = 0, l2 = 0, li = 0;
    for (const auto* r : run.successes()) {
      const LpNorms n = lp_norms(r->original, r->adversarial);
      l0 += n.l0_fraction;
      l2 += n.l2;
      li += n.linf;
    }
    const double n = double(row.succeeded);
    CHECK(row.mean_norms.l0_fraction == doctest::Approx(l0 / n).epsilon(1e-12));
    CHECK(row.mean_norms.l2 == doctest::Approx(l2 / n).epsilon(1e-12));
    CHECK(row.mean_norms.linf == doctest::Approx(li / n).epsilon(1e-12));
  }

  CHECK_THROWS(generate_suite(t.model, {}, {}, cfgs));
  CHECK_THROWS(generate_suite(t.model, images, labels.first(3), cfgs));
}

TEST_CASE("suite records vanishing-gradient failures as warnings") {
  LinearClassifier flat(Shape{1, 2, 2}, Tensor(Shape{2, 4}, 0.0), Tensor(Shape{2}, {1.0, 0.0}));
  std::vector<Tensor> images(2, Tensor(Shape{1, 2, 2}, 0.5));
  std::vector<std::size_t> labels(2, 0);
  std::vector<AttackConfig> cfgs(1);
  cfgs[0].name = "df";
  cfgs[0].method = AttackMethod::DeepFool;
  cfgs[0].iterations = 3;
  const auto s = generate_suite(flat, images, labels, cfgs);
  CHECK(s.summary.empty());
  CHECK(s.warnings.size() == 3);
}

// Links against aeae_detector only: detector fitting must build and run
// without any attack code present.
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "aeae/detector.hpp"

using namespace aeae;

namespace {

const ImageShape kShape{1, 8, 8};

// Smooth blobs on a dim background, loosely image-like.
std::vector<Tensor> blob_images(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Tensor> out;
  for (std::size_t k = 0; k < n; ++k) {
    Tensor t(kShape.chw());
    const double cy = 2 + 4 * u(rng), cx = 2 + 4 * u(rng), r = 1.5 + u(rng);
    for (std::size_t y = 0; y < 8; ++y)
      for (std::size_t x = 0; x < 8; ++x) {
        const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
        t[y * 8 + x] = 0.1 + 0.7 * std::exp(-d2 / (r * r)) + 0.02 * u(rng);
      }
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<Tensor> noise_images(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Tensor> out;
  for (std::size_t k = 0; k < n; ++k) {
    Tensor t(kShape.chw());
    for (double& v : t.values()) v = u(rng);
    out.push_back(std::move(t));
  }
  return out;
}

DetectorParams small_params(std::uint64_t seed = 1) {
  DetectorParams p;
  p.forest.trees = 50;
  p.forest.seed = seed;
  return p;
}

const DetectorModel& fitted() {
  static const DetectorModel d = [] {
    auto ae = AutoencoderModel::build(kShape, 4, 1);
    const auto train = blob_images(200, 2);
    train_autoencoder(ae, train, TrainConfig{.learning_rate = 0.01, .batch_size = 16,
                                             .epochs = 15, .seed = 3});
    auto clf = ClassifierModel::build({kShape, 4, 4, 3}, 4);
    return DetectorModel::fit(std::move(ae), std::move(clf), blob_images(300, 5), small_params());
  }();
  return d;
}

long double kl_reference(const std::vector<long double>& p, const std::vector<long double>& q) {
  long double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) s += p[i] * std::log(p[i] / q[i]);
  return s;
}

}  // namespace

TEST_CASE("image mse") {
  const Tensor a(Shape{1, 2, 2}, {0.0, 0.0, 1.0, 1.0});
  const Tensor b(Shape{1, 2, 2}, {0.0, 1.0, 1.0, 1.0});
  CHECK(image_mse(a, b) == 0.25);
  CHECK(image_mse(a, a) == 0.0);
  CHECK_THROWS(image_mse(a, Tensor(Shape{1, 2, 3}, 0.0)));
}

TEST_CASE("KL divergence examples") {
  const double p[] = {0.5, 0.5}, q[] = {0.9, 0.1};
  CHECK(std::abs(kl_divergence(p, q) - 0.510826) < 1e-5);
  CHECK(kl_divergence(p, p) == 0.0);
  const double three[] = {0.2, 0.3, 0.5};
  CHECK_THROWS(kl_divergence(p, three));
  CHECK_THROWS(kl_divergence(std::span<const double>(), std::span<const double>()));

  // A zero in q would make KL infinite; the floor keeps it finite.
  const double r[] = {1.0, 0.0}, s[] = {0.0, 1.0};
  const double v = kl_divergence(r, s);
  CHECK(std::isfinite(v));
  CHECK(v == doctest::Approx(std::log(1e12)).epsilon(1e-6));
}

TEST_CASE("KL divergence is non-negative and matches extended precision") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = 2 + trial % 9;
    std::vector<double> p(k), q(k);
    double sp = 0, sq = 0;
    for (std::size_t i = 0; i < k; ++i) {
      p[i] = u(rng) + 1e-3;
      q[i] = u(rng) + 1e-3;
      sp += p[i];
      sq += q[i];
    }
    for (std::size_t i = 0; i < k; ++i) {
      p[i] /= sp;
      q[i] /= sq;
    }
    const double v = kl_divergence(p, q);
    REQUIRE(v >= 0.0);
    REQUIRE(kl_divergence(p, p) == 0.0);
    if (trial % 10 == 0) {
      std::vector<long double> lp(p.begin(), p.end()), lq(q.begin(), q.end());
      long double tp = 0, tq = 0;
      for (std::size_t i = 0; i < k; ++i) {
        tp += lp[i];
        tq += lq[i];
      }
      for (std::size_t i = 0; i < k; ++i) {
        lp[i] /= tp;
        lq[i] /= tq;
      }
      REQUIRE(std::abs(static_cast<long double>(v) - kl_reference(lp, lq)) < 1e-12L);
    }
  }
}

TEST_CASE("pd mode names and defaults") {
  CHECK(parse_pd_mode("kl") == PdMode::KL);
  CHECK(parse_pd_mode("label") == PdMode::Label);
  CHECK(to_string(PdMode::KL) == "kl");
  CHECK_THROWS(parse_pd_mode("l2"));
  CHECK(default_pd_mode(10) == PdMode::KL);
  CHECK(default_pd_mode(100) == PdMode::KL);
  CHECK(default_pd_mode(1000) == PdMode::Label);
}

TEST_CASE("label distance") {
  // Class 0 responds to the first pixel, class 1 to the second.
  LinearClassifier clf(Shape{2}, Tensor(Shape{2, 2}, {1.0, 0.0, 0.0, 1.0}),
                       Tensor(Shape{2}, 0.0));
  const Tensor x(Shape{2}, {0.8, 0.2}), y(Shape{2}, {0.3, 0.6});
  CHECK(label_distance(clf, x, x) == 0);
  CHECK(label_distance(clf, x, y) == 1);

  // Strictly monotone rescaling of the logits never changes the answer.
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    const double scale = 0.1 + 5 * u(rng), shift = 10 * u(rng) - 5;
    LinearClassifier scaled(Shape{2}, Tensor(Shape{2, 2}, {scale, 0.0, 0.0, scale}),
                            Tensor(Shape{2}, shift));
    const Tensor a(Shape{2}, {u(rng), u(rng)}), b(Shape{2}, {u(rng), u(rng)});
    REQUIRE(label_distance(clf, a, b) == label_distance(scaled, a, b));
  }
}

TEST_CASE("feature extraction composes reconstruction and prediction distance") {
  const DetectorModel& d = fitted();
  for (const Tensor& x : blob_images(10, 99)) {
    const Tensor recon = d.autoencoder().reconstruct(x);
    const TwoTupleFeature f = d.extract_feature(x);
    CHECK(f.mse == image_mse(x, recon));
    CHECK(f.mse == reconstruction_error(d.autoencoder(), x));
    const double kl = kl_divergence(d.classifier().predict(x).data(),
                                    d.classifier().predict(recon).data(), d.kl_floor());
    CHECK(f.pd == doctest::Approx(kl).epsilon(1e-12));
    CHECK(f.pd >= 0.0);
    CHECK(d.extract_feature(x) == f);

    const TwoTupleFeature lf = extract_feature(d.autoencoder(), d.classifier(), PdMode::Label,
                                               d.kl_floor(), x);
    CHECK(lf.pd == label_distance(d.classifier(), x, recon));

    const Detection det = d.detect(x);
    const OutlierVerdict manual = d.score_model().predict(f.point());
    CHECK(det.adversarial == manual.outlier);
    CHECK(det.score == manual.score);
    CHECK(det.feature == f);
  }
  CHECK_THROWS(d.extract_feature(Tensor(Shape{1, 4, 4}, 0.5)));
}

TEST_CASE("fitting calibrates on benign features") {
  const DetectorModel& d = fitted();
  CHECK(d.pd_mode() == PdMode::KL);
  CHECK(d.score_model().contamination() == 0.10);
  const auto train = blob_images(300, 5);
  std::size_t flagged = 0;
  std::vector<double> scores;
  for (const auto& x : train) {
    const Detection det = d.detect(x);
    flagged += det.adversarial;
    scores.push_back(det.score);
  }
  CHECK(std::abs(static_cast<double>(flagged) - 30.0) <= 1.0);

  // The image at the score median is benign.
  const double median = empirical_quantile(scores, 0.5);
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (scores[i] == median) CHECK_FALSE(d.detect(train[i]).adversarial);
  }
}

TEST_CASE("fitting is deterministic and validates its inputs") {
  auto ae = AutoencoderModel::build(kShape, 4, 1);
  auto clf = ClassifierModel::build({kShape, 4, 4, 3}, 4);
  const auto imgs = blob_images(80, 8);
  const auto a = DetectorModel::fit(ae, clf, imgs, small_params(6));
  const auto b = DetectorModel::fit(ae, clf, imgs, small_params(6));
  CHECK(a.serialize() == b.serialize());
  for (const auto& x : noise_images(20, 1)) CHECK(a.detect(x).score == b.detect(x).score);

  CHECK_THROWS(DetectorModel::fit(ae, clf, std::span(imgs.data(), 49), small_params()));
  CHECK_NOTHROW(DetectorModel::fit(ae, clf, std::span(imgs.data(), 50), small_params()));
  DetectorParams bad = small_params();
  bad.contamination = 0.6;
  CHECK_THROWS(DetectorModel::fit(ae, clf, imgs, bad));
  DetectorParams label = small_params();
  label.pd_mode = PdMode::Label;
  const auto l = DetectorModel::fit(ae, clf, imgs, label);
  CHECK(l.pd_mode() == PdMode::Label);
  for (const auto& x : imgs) {
    const double pd = l.extract_feature(x).pd;
    REQUIRE((pd == 0.0 || pd == 1.0));
  }
  auto other = ClassifierModel::build({ImageShape{1, 12, 12}, 4, 4, 3}, 4);
  CHECK_THROWS(DetectorModel::fit(ae, other, imgs, small_params()));
}

TEST_CASE("F1 and rate arithmetic") {
  CHECK(std::abs(f1_score(0.8990, 1.0) - 0.9468) < 5e-5);
  CHECK(f1_score(0.0, 0.0) == 0.0);

  const DetectionMetrics none = compute_metrics({0, 0, 400, 100});
  CHECK(none.recall == 0.0);
  CHECK(none.fpr == 0.0);
  CHECK(none.f1 == 0.0);

  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::size_t> u(0, 300);
  for (int trial = 0; trial < 2000; ++trial) {
    const ConfusionCounts c{u(rng), u(rng), u(rng), u(rng)};
    const DetectionMetrics m = compute_metrics(c);
    REQUIRE(m.recall == m.tpr);
    for (double r : {m.recall, m.precision, m.f1, m.tpr, m.fpr}) {
      REQUIRE(r >= 0.0);
      REQUIRE(r <= 1.0);
    }
    const double p = c.tp + c.fp ? double(c.tp) / double(c.tp + c.fp) : 0.0;
    const double r = c.tp + c.fn ? double(c.tp) / double(c.tp + c.fn) : 0.0;
    const double f1 = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
    REQUIRE(std::abs(m.f1 - f1) < 1e-9);
    if (c.fp + c.tn) REQUIRE(m.fpr == double(c.fp) / double(c.fp + c.tn));
  }
}

TEST_CASE("evaluation counts partition the inputs") {
  const DetectorModel& d = fitted();
  const auto benign = blob_images(60, 21);
  const auto noise = noise_images(25, 22);
  const auto more = blob_images(15, 23);
  const NamedImageSet sets[] = {{"noise", noise}, {"blobs", more}};
  const EvalReport rep = evaluate(d, benign, sets);

  CHECK(rep.benign_count == 60);
  CHECK(rep.adversarial_count == 40);
  REQUIRE(rep.per_attack.size() == 2);
  std::size_t tp = 0, fn = 0;
  for (const auto& row : rep.per_attack) {
    const auto& c = row.metrics.counts;
    CHECK(c.fp + c.tn == 60);
    CHECK(c.fp == rep.overall.counts.fp);
    tp += c.tp;
    fn += c.fn;
  }
  CHECK(rep.per_attack[0].metrics.counts.tp + rep.per_attack[0].metrics.counts.fn == 25);
  CHECK(rep.per_attack[1].metrics.counts.tp + rep.per_attack[1].metrics.counts.fn == 15);
  CHECK(rep.overall.counts.tp == tp);
  CHECK(rep.overall.counts.fn == fn);
  CHECK(rep.overall.counts.fp + rep.overall.counts.tn == 60);

  // Counts match per-image verdicts.
  std::size_t fp = 0;
  for (const auto& x : benign) fp += d.detect(x).adversarial;
  CHECK(rep.overall.counts.fp == fp);
  // Uniform noise sits far outside the benign cloud.
  CHECK(rep.per_attack[0].metrics.recall >= 0.9);

  const NamedImageSet empty_set[] = {{"empty", {}}};
  CHECK_THROWS(evaluate(d, benign, empty_set));
  CHECK_THROWS(evaluate(d, {}, sets));
  CHECK_THROWS(evaluate(d, benign, {}));
}

TEST_CASE("a detector that never fires has zero recall and zero FPR") {
  const DetectorModel& d = fitted();
  const DetectorModel quiet(d.autoencoder(), d.classifier(),
                            ScoreModel(d.score_model().forest(), 0.999999, 0.1), PdMode::KL,
                            d.kl_floor());
  const auto benign = blob_images(20, 31);
  const auto noise = noise_images(20, 32);
  const NamedImageSet sets[] = {{"noise", noise}};
  const EvalReport rep = evaluate(quiet, benign, sets);
  CHECK(rep.overall.recall == 0.0);
  CHECK(rep.overall.fpr == 0.0);
  CHECK(rep.overall.counts.tn == 20);
  CHECK(rep.overall.counts.fn == 20);
}

TEST_CASE("scatter export") {
  const DetectorModel& d = fitted();
  const auto benign = blob_images(12, 41);
  const auto adv = noise_images(7, 42);
  const auto rows = scatter_rows(d, benign, adv);
  REQUIRE(rows.size() == 19);
  for (std::size_t i = 0; i < rows.size(); ++i) CHECK(rows[i].adversarial == (i >= 12));
  CHECK(rows[0].feature == d.extract_feature(benign[0]));

  const auto path = std::filesystem::temp_directory_path() / "aeae_scatter_test.csv";
  export_scatter(d, benign, adv, path.string());
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "mse,pd,class");
  std::size_t n = 0, adv_rows = 0;
  while (std::getline(in, line)) {
    ++n;
    adv_rows += line.ends_with(",adversarial");
    if (n == 1) {
      const double mse = std::stod(line.substr(0, line.find(',')));
      CHECK(mse == rows[0].feature.mse);
    }
  }
  CHECK(n == 19);
  CHECK(adv_rows == 7);
  std::filesystem::remove(path);
  CHECK_THROWS(export_scatter(d, benign, adv, "/nonexistent-dir/x.csv"));
}

TEST_CASE("checkpoint round trip and tamper detection") {
  const DetectorModel& d = fitted();
  const auto bytes = d.serialize();
  const DetectorModel e = DetectorModel::deserialize(bytes);
  CHECK(e.serialize() == bytes);
  CHECK(e.score_model().threshold() == d.score_model().threshold());
  for (const auto& x : noise_images(10, 51)) CHECK(e.detect(x).score == d.detect(x).score);

  auto expect_kind = [](std::vector<std::uint8_t> b, CheckpointError::Kind kind) {
    try {
      DetectorModel::deserialize(b);
      FAIL("deserialize accepted a damaged checkpoint");
    } catch (const CheckpointError& err) {
      CHECK(err.kind() == kind);
    }
  };
  // Flip one byte inside the embedded autoencoder weights.
  auto flipped = bytes;
  flipped[40] ^= 0x01;
  expect_kind(flipped, CheckpointError::Kind::Corrupt);
  // Damage only the final binding digest.
  auto bound = bytes;
  bound.back() ^= 0xff;
  expect_kind(bound, CheckpointError::Kind::Corrupt);
  auto truncated = bytes;
  truncated.resize(bytes.size() - 9);
  expect_kind(truncated, CheckpointError::Kind::Corrupt);
  auto magic = bytes;
  magic[0] = 'X';
  expect_kind(magic, CheckpointError::Kind::Version);
  auto version = bytes;
  version[4] = 99;
  expect_kind(version, CheckpointError::Kind::Version);
  expect_kind(serialize_model(d.autoencoder()), CheckpointError::Kind::WrongModel);

  const auto path = std::filesystem::temp_directory_path() / "aeae_detector_test.ckpt";
  d.save(path.string());
  CHECK(std::filesystem::file_size(path) == bytes.size());
  CHECK(DetectorModel::load(path.string()).serialize() == bytes);
  std::filesystem::remove(path);
  try {
    DetectorModel::load(path.string());
    FAIL("loaded a missing file");
  } catch (const CheckpointError& err) {
    CHECK(err.kind() == CheckpointError::Kind::Io);
  }
}

TEST_CASE("timing report accounting") {
  const DetectorModel& d = fitted();
  const auto probes = blob_images(40, 61);
  const TimingReport t = timing_report(d, probes);
  CHECK(t.images == 40);
  CHECK(t.feature_seconds > 0.0);
  CHECK(t.scoring_seconds > 0.0);
  CHECK(t.total_seconds == doctest::Approx(t.feature_seconds + t.scoring_seconds).epsilon(0.05));
  CHECK(t.scoring_seconds < t.feature_seconds);
  CHECK(t.checkpoint_bytes == d.serialize().size());
  CHECK(t.autoencoder_bytes == serialize_model(d.autoencoder()).size());
  CHECK(t.classifier_bytes == serialize_model(d.classifier()).size());
  CHECK(t.forest_bytes == d.score_model().forest().serialize().size());
  CHECK(t.autoencoder_parameters == d.autoencoder().parameter_count());
  CHECK(t.forest_trees == 50);
  CHECK(t.max_tree_nodes >= 1);
}

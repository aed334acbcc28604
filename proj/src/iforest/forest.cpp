#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "aeae/binary_io.hpp"
#include "aeae/iforest.hpp"

namespace aeae {

IsolationForest::IsolationForest(std::vector<ITree> trees, std::size_t subsample_size,
                                 std::size_t height_limit, std::size_t n_train,
                                 std::uint64_t seed)
    : trees_(std::move(trees)),
      subsample_size_(subsample_size),
      height_limit_(height_limit),
      n_train_(n_train),
      seed_(seed) {
  if (subsample_size_ < 2) throw std::invalid_argument("forest: subsample size must be >= 2");
  for (const auto& t : trees_) {
    if (t.dimensions() != trees_.front().dimensions()) {
      throw std::invalid_argument("forest: trees disagree on dimensionality");
    }
  }
}

IsolationForest IsolationForest::fit(std::span<const FeaturePoint> points,
                                     const ForestParams& params) {
  if (points.size() < 2) throw std::invalid_argument("forest: need at least 2 points");
  if (params.trees < 1) throw std::invalid_argument("forest: need at least 1 tree");
  if (params.subsample < 2) throw std::invalid_argument("forest: subsample must be >= 2");
  const std::size_t dims = points.front().size();
  if (dims == 0) throw std::invalid_argument("forest: zero-dimensional points");
  for (const auto& p : points) {
    if (p.size() != dims) throw std::invalid_argument("forest: points of mixed dimension");
  }
  const std::size_t psi = std::min(params.subsample, points.size());
  const std::size_t limit = params.height_limit.value_or(
      static_cast<std::size_t>(std::ceil(std::log2(static_cast<double>(psi)))));

  std::vector<ITree> trees;
  trees.reserve(params.trees);
  std::vector<std::size_t> all(points.size());
  for (std::size_t t = 0; t < params.trees; ++t) {
    const std::uint64_t tree_seed = params.seed + t;
    // Partial Fisher-Yates: the first psi entries become the subsample.
    std::mt19937_64 rng(tree_seed ^ 0x9e3779b97f4a7c15ULL);
    std::iota(all.begin(), all.end(), std::size_t{0});
    for (std::size_t i = 0; i < psi; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, all.size() - 1);
      std::swap(all[i], all[pick(rng)]);
    }
    trees.push_back(ITree::build(points, std::span(all.data(), psi), limit, tree_seed));
  }
  return IsolationForest(std::move(trees), psi, limit, points.size(), params.seed);
}

void IsolationForest::require_fitted() const {
  if (trees_.empty()) throw NotFittedError("isolation forest has not been fitted");
}

double IsolationForest::mean_path_length(std::span<const double> x) const {
  require_fitted();
  double total = 0.0;
  for (const auto& tree : trees_) total += tree.path_length(x);
  return total / static_cast<double>(trees_.size());
}

double IsolationForest::anomaly_score(std::span<const double> x) const {
  const double expected = mean_path_length(x);
  return std::exp2(-expected / c_factor(subsample_size_));
}

std::vector<std::uint8_t> IsolationForest::serialize() const {
  ByteWriter w;
  w.u64(subsample_size_);
  w.u64(height_limit_);
  w.u64(n_train_);
  w.u64(seed_);
  w.u64(dimensions());
  w.u32(static_cast<std::uint32_t>(trees_.size()));
  for (const auto& tree : trees_) {
    w.u32(static_cast<std::uint32_t>(tree.nodes().size()));
    for (const auto& n : tree.nodes()) {
      w.u32(static_cast<std::uint32_t>(n.split_dimension));
      w.f64(n.split_value);
      w.u32(n.left);
      w.u32(n.right);
      w.u64(n.size);
    }
  }
  return w.take();
}

IsolationForest IsolationForest::deserialize(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  const std::size_t psi = r.u64();
  const std::size_t limit = r.u64();
  const std::size_t n_train = r.u64();
  const std::uint64_t seed = r.u64();
  const std::size_t dims = r.u64();
  const std::uint32_t count = r.u32();
  std::vector<ITree> trees;
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::uint32_t n_nodes = r.u32();
    if (static_cast<std::size_t>(n_nodes) * 28 > r.remaining()) {
      throw TruncatedInput("forest: node table exceeds input");
    }
    std::vector<ITreeNode> nodes(n_nodes);
    for (auto& n : nodes) {
      n.split_dimension = static_cast<std::int32_t>(r.u32());
      n.split_value = r.f64();
      n.left = r.u32();
      n.right = r.u32();
      n.size = r.u64();
    }
    trees.emplace_back(std::move(nodes), dims);
  }
  if (!r.at_end()) throw std::invalid_argument("forest: trailing bytes");
  return IsolationForest(std::move(trees), psi, limit, n_train, seed);
}

double empirical_quantile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("quantile of empty set");
  std::sort(values.begin(), values.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(values.size())));
  return values[std::clamp<std::size_t>(rank, 1, values.size()) - 1];
}

ScoreModel::ScoreModel(IsolationForest forest, double threshold, double contamination)
    : forest_(std::move(forest)), threshold_(threshold), contamination_(contamination) {
  if (!(contamination_ > 0.0 && contamination_ < 0.5)) {
    throw std::invalid_argument("contamination must lie in (0, 0.5)");
  }
  if (!(threshold_ > 0.0 && threshold_ < 1.0)) {
    throw std::invalid_argument("score threshold must lie in (0, 1)");
  }
}

ScoreModel ScoreModel::calibrate(IsolationForest forest, std::span<const FeaturePoint> training,
                                 double contamination) {
  if (!(contamination > 0.0 && contamination < 0.5)) {
    throw std::invalid_argument("contamination must lie in (0, 0.5), got " +
                                std::to_string(contamination));
  }
  if (training.empty()) throw std::invalid_argument("calibration needs training points");
  std::vector<double> scores;
  scores.reserve(training.size());
  for (const auto& p : training) scores.push_back(forest.anomaly_score(p));
  const double threshold = empirical_quantile(std::move(scores), 1.0 - contamination);
  return ScoreModel(std::move(forest), threshold, contamination);
}

OutlierVerdict ScoreModel::predict(std::span<const double> x) const {
  const double score = forest_.anomaly_score(x);
  return {score > threshold_, score};
}

}  // namespace aeae

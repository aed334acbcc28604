#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace aeae {

using FeaturePoint = std::vector<double>;

/// Euler-Mascheroni constant used by the harmonic-number approximation.
inline constexpr double kEulerGamma = 0.5772156649;

/// Average path length of an unsuccessful BST search over n points:
/// c(n) = 2 H(n-1) - 2(n-1)/n with H(k) = ln k + gamma; c(0) = c(1) = 0.
double c_factor(std::size_t n);

class NotFittedError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Flattened isolation-tree node. Leaves have split_dimension < 0.
struct ITreeNode {
  std::int32_t split_dimension = -1;
  double split_value = 0.0;
  std::uint32_t left = 0;
  std::uint32_t right = 0;
  std::uint64_t size = 0;  ///< training points that reached a leaf

  bool is_leaf() const { return split_dimension < 0; }
  static ITreeNode leaf(std::uint64_t size) { return ITreeNode{-1, 0.0, 0, 0, size}; }
  static ITreeNode split(std::int32_t dim, double value, std::uint32_t left, std::uint32_t right) {
    return ITreeNode{dim, value, left, right, 0};
  }
};

class ITree {
 public:
  ITree() = default;
  /// Node 0 is the root. Throws std::invalid_argument on dangling children.
  ITree(std::vector<ITreeNode> nodes, std::size_t dimensions);

  /// Builds a tree on `points[sample[i]]`, stopping at `height_limit`, single
  /// points, or points identical in every dimension.
  static ITree build(std::span<const FeaturePoint> points, std::span<const std::size_t> sample,
                     std::size_t height_limit, std::uint64_t seed);

  /// Edges to the terminating leaf plus c_factor(leaf size).
  double path_length(std::span<const double> x) const;
  std::size_t depth() const;
  std::size_t dimensions() const { return dims_; }
  const std::vector<ITreeNode>& nodes() const { return nodes_; }

 private:
  std::vector<ITreeNode> nodes_;
  std::size_t dims_ = 0;
};

struct ForestParams {
  std::size_t trees = 100;
  std::size_t subsample = 256;
  std::optional<std::size_t> height_limit;  ///< default ceil(log2(subsample))
  std::uint64_t seed = 0;
};

class IsolationForest {
 public:
  IsolationForest() = default;
  /// Assembles a forest from prebuilt trees; `subsample_size` is the n of c(n).
  IsolationForest(std::vector<ITree> trees, std::size_t subsample_size, std::size_t height_limit,
                  std::size_t n_train, std::uint64_t seed);

  /// Tree i is grown from seed + i on a uniform subsample of min(psi, n) points.
  static IsolationForest fit(std::span<const FeaturePoint> points, const ForestParams& params);

  bool fitted() const { return !trees_.empty(); }
  double mean_path_length(std::span<const double> x) const;
  /// s(x, n) = 2^(-E[h(x)] / c(n)).
  double anomaly_score(std::span<const double> x) const;

  const std::vector<ITree>& trees() const { return trees_; }
  std::size_t subsample_size() const { return subsample_size_; }
  std::size_t height_limit() const { return height_limit_; }
  std::size_t n_train() const { return n_train_; }
  std::size_t dimensions() const { return trees_.empty() ? 0 : trees_.front().dimensions(); }
  std::uint64_t seed() const { return seed_; }

  std::vector<std::uint8_t> serialize() const;
  static IsolationForest deserialize(std::span<const std::uint8_t> bytes);

 private:
  void require_fitted() const;

  std::vector<ITree> trees_;
  std::size_t subsample_size_ = 0;
  std::size_t height_limit_ = 0;
  std::size_t n_train_ = 0;
  std::uint64_t seed_ = 0;
};

struct OutlierVerdict {
  bool outlier = false;
  double score = 0.0;
};

/// Forest plus a score threshold calibrated on training data.
class ScoreModel {
 public:
  ScoreModel() = default;
  ScoreModel(IsolationForest forest, double threshold, double contamination);

  /// Threshold = (1 - contamination) empirical quantile of training scores.
  static ScoreModel calibrate(IsolationForest forest, std::span<const FeaturePoint> training,
                              double contamination);

  /// Outlier iff score > threshold.
  OutlierVerdict predict(std::span<const double> x) const;

  const IsolationForest& forest() const { return forest_; }
  double threshold() const { return threshold_; }
  double contamination() const { return contamination_; }

 private:
  IsolationForest forest_;
  double threshold_ = 0.5;
  double contamination_ = 0.1;
};

/// Order statistic used by calibration: element ceil(q * n) - 1 of the sorted values.
double empirical_quantile(std::vector<double> values, double q);

}  // namespace aeae

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>

#include "aeae/iforest.hpp"

namespace aeae {

double c_factor(std::size_t n) {
  if (n <= 1) return 0.0;
  const double m = static_cast<double>(n - 1);
  return 2.0 * (std::log(m) + kEulerGamma) - 2.0 * m / static_cast<double>(n);
}

ITree::ITree(std::vector<ITreeNode> nodes, std::size_t dimensions)
    : nodes_(std::move(nodes)), dims_(dimensions) {
  if (nodes_.empty()) throw std::invalid_argument("ITree: no nodes");
  for (const auto& node : nodes_) {
    if (node.is_leaf()) continue;
    if (node.left >= nodes_.size() || node.right >= nodes_.size() ||
        static_cast<std::size_t>(node.split_dimension) >= dims_) {
      throw std::invalid_argument("ITree: node references missing child or dimension");
    }
  }
}

ITree ITree::build(std::span<const FeaturePoint> points, std::span<const std::size_t> sample,
                   std::size_t height_limit, std::uint64_t seed) {
  if (sample.empty()) throw std::invalid_argument("ITree: empty sample");
  const std::size_t dims = points[sample.front()].size();
  std::mt19937_64 rng(seed);
  ITree tree;
  tree.dims_ = dims;
  std::vector<std::size_t> idx(sample.begin(), sample.end());

  // Grows the subtree over idx[lo, hi) and returns its node index.
  std::function<std::uint32_t(std::size_t, std::size_t, std::size_t)> grow =
      [&](std::size_t lo, std::size_t hi, std::size_t depth) -> std::uint32_t {
    const std::size_t count = hi - lo;
    const auto self = static_cast<std::uint32_t>(tree.nodes_.size());
    tree.nodes_.push_back(ITreeNode::leaf(count));
    if (depth >= height_limit || count <= 1) return self;

    std::vector<std::size_t> splittable;
    std::vector<std::pair<double, double>> range(dims);
    for (std::size_t d = 0; d < dims; ++d) {
      double mn = points[idx[lo]][d], mx = mn;
      for (std::size_t i = lo + 1; i < hi; ++i) {
        mn = std::min(mn, points[idx[i]][d]);
        mx = std::max(mx, points[idx[i]][d]);
      }
      range[d] = {mn, mx};
      if (mx > mn) splittable.push_back(d);
    }
    if (splittable.empty()) return self;

    const std::size_t dim =
        splittable[std::uniform_int_distribution<std::size_t>(0, splittable.size() - 1)(rng)];
    const auto [mn, mx] = range[dim];
    std::uniform_real_distribution<double> uniform(mn, mx);
    double split = mx;
    // Adjacent doubles leave no room strictly inside; split at mx instead.
    if (std::nextafter(mn, mx) < mx) {
      do split = uniform(rng);
      while (!(split > mn && split < mx));
    }

    auto mid = std::partition(idx.begin() + static_cast<std::ptrdiff_t>(lo),
                              idx.begin() + static_cast<std::ptrdiff_t>(hi),
                              [&](std::size_t i) { return points[i][dim] < split; });
    const auto split_at = static_cast<std::size_t>(mid - idx.begin());
    const std::uint32_t left = grow(lo, split_at, depth + 1);
    const std::uint32_t right = grow(split_at, hi, depth + 1);
    tree.nodes_[self] = ITreeNode::split(static_cast<std::int32_t>(dim), split, left, right);
    return self;
  };
  grow(0, idx.size(), 0);
  return tree;
}

double ITree::path_length(std::span<const double> x) const {
  if (x.size() != dims_) {
    throw std::invalid_argument("ITree: point has " + std::to_string(x.size()) +
                                " dimensions, tree expects " + std::to_string(dims_));
  }
  std::size_t node = 0;
  double edges = 0.0;
  while (!nodes_[node].is_leaf()) {
    const ITreeNode& n = nodes_[node];
    node = x[static_cast<std::size_t>(n.split_dimension)] < n.split_value ? n.left : n.right;
    edges += 1.0;
  }
  return edges + c_factor(nodes_[node].size);
}

std::size_t ITree::depth() const {
  std::function<std::size_t(std::size_t)> walk = [&](std::size_t i) -> std::size_t {
    if (nodes_[i].is_leaf()) return 0;
    return 1 + std::max(walk(nodes_[i].left), walk(nodes_[i].right));
  };
  return nodes_.empty() ? 0 : walk(0);
}

}  // namespace aeae

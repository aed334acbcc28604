#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>

#include "aeae/detector.hpp"

namespace aeae {

double f1_score(double precision, double recall) {
  if (precision + recall <= 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

DetectionMetrics compute_metrics(const ConfusionCounts& c) {
  auto ratio = [](std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  DetectionMetrics m;
  m.counts = c;
  m.recall = ratio(c.tp, c.tp + c.fn);
  m.tpr = m.recall;
  m.precision = ratio(c.tp, c.tp + c.fp);
  m.fpr = ratio(c.fp, c.fp + c.tn);
  m.f1 = f1_score(m.precision, m.recall);
  return m;
}

EvalReport evaluate(const DetectorModel& detector, std::span<const Tensor> benign,
                    std::span<const NamedImageSet> adversarial_sets) {
  if (benign.empty()) throw std::invalid_argument("evaluate: empty benign set");
  if (adversarial_sets.empty()) throw std::invalid_argument("evaluate: no adversarial sets");
  ConfusionCounts benign_counts;
  for (const auto& img : benign) {
    if (detector.detect(img).adversarial) {
      ++benign_counts.fp;
    } else {
      ++benign_counts.tn;
    }
  }
  EvalReport report;
  report.benign_count = benign.size();
  ConfusionCounts overall = benign_counts;
  for (const auto& set : adversarial_sets) {
    if (set.images.empty()) {
      throw std::invalid_argument("evaluate: adversarial set '" + set.name + "' is empty");
    }
    ConfusionCounts c = benign_counts;
    for (const auto& img : set.images) {
      if (detector.detect(img).adversarial) {
        ++c.tp;
      } else {
        ++c.fn;
      }
    }
    overall.tp += c.tp;
    overall.fn += c.fn;
    report.adversarial_count += set.images.size();
    report.per_attack.push_back({set.name, compute_metrics(c)});
  }
  report.overall = compute_metrics(overall);
  return report;
}

std::vector<ScatterRow> scatter_rows(const DetectorModel& detector,
                                     std::span<const Tensor> benign,
                                     std::span<const Tensor> adversarial) {
  std::vector<ScatterRow> rows;
  rows.reserve(benign.size() + adversarial.size());
  for (const auto& img : benign) rows.push_back({detector.extract_feature(img), false});
  for (const auto& img : adversarial) rows.push_back({detector.extract_feature(img), true});
  return rows;
}

void export_scatter(const DetectorModel& detector, std::span<const Tensor> benign,
                    std::span<const Tensor> adversarial, const std::string& path) {
  const auto rows = scatter_rows(detector, benign, adversarial);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("export_scatter: cannot write " + path);
  out << "mse,pd,class\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g", r.feature.mse);
    out << buf << ',';
    std::snprintf(buf, sizeof buf, "%.17g", r.feature.pd);
    out << buf << ',' << (r.adversarial ? "adversarial" : "benign") << '\n';
  }
  if (!out) throw std::runtime_error("export_scatter: write failed for " + path);
}

TimingReport timing_report(const DetectorModel& detector, std::span<const Tensor> probes) {
  using clock = std::chrono::steady_clock;
  TimingReport t;
  t.images = probes.size();
  clock::duration features{}, scoring{};
  for (const auto& img : probes) {
    const auto t0 = clock::now();
    const TwoTupleFeature f = detector.extract_feature(img);
    const auto t1 = clock::now();
    (void)detector.classify_feature(f);
    const auto t2 = clock::now();
    features += t1 - t0;
    scoring += t2 - t1;
  }
  if (!probes.empty()) {
    const double n = static_cast<double>(probes.size());
    t.feature_seconds = std::chrono::duration<double>(features).count() / n;
    t.scoring_seconds = std::chrono::duration<double>(scoring).count() / n;
  }
  t.total_seconds = t.feature_seconds + t.scoring_seconds;
  t.autoencoder_bytes = serialize_model(detector.autoencoder()).size();
  t.classifier_bytes = serialize_model(detector.classifier()).size();
  t.forest_bytes = detector.score_model().forest().serialize().size();
  t.checkpoint_bytes = detector.serialize().size();
  t.autoencoder_parameters = detector.autoencoder().parameter_count();
  t.forest_trees = detector.score_model().forest().trees().size();
  for (const auto& tree : detector.score_model().forest().trees()) {
    t.max_tree_nodes = std::max(t.max_tree_nodes, tree.nodes().size());
  }
  return t;
}

}  // namespace aeae

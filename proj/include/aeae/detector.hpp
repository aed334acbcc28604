#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aeae/iforest.hpp"
#include "aeae/models.hpp"

namespace aeae {

/// How the prediction distance between x and ae(x) is measured.
enum class PdMode {
  KL,     ///< KL(p_x || p_ae(x)), natural log
  Label,  ///< 1 iff argmax f(x) != argmax f(ae(x))
};

std::string to_string(PdMode mode);
PdMode parse_pd_mode(const std::string& name);
/// KL for label spaces up to 100 classes, label comparison above.
PdMode default_pd_mode(std::size_t classes);

inline constexpr double kDefaultKlFloor = 1e-12;

struct TwoTupleFeature {
  double mse = 0.0;
  double pd = 0.0;

  FeaturePoint point() const { return {mse, pd}; }
  friend bool operator==(const TwoTupleFeature&, const TwoTupleFeature&) = default;
};

/// Mean squared pixel difference.
double image_mse(const Tensor& a, const Tensor& b);
double reconstruction_error(const AutoencoderModel& ae, const Tensor& image);

/// KL(p || q) after clamping entries to >= floor and renormalising both.
double kl_divergence(std::span<const double> p, std::span<const double> q,
                     double floor = kDefaultKlFloor);

int label_distance(const DifferentiableClassifier& classifier, const Tensor& image,
                   const Tensor& reconstruction);

/// (MSE, PD) for one image: one autoencoder pass, two classifier passes.
TwoTupleFeature extract_feature(const AutoencoderModel& ae,
                                const DifferentiableClassifier& classifier, PdMode mode,
                                double kl_floor, const Tensor& image);

struct DetectorParams {
  double contamination = 0.10;
  std::optional<PdMode> pd_mode;  ///< default_pd_mode(classes) when unset
  double kl_floor = kDefaultKlFloor;
  ForestParams forest;
};

inline constexpr std::size_t kMinDetectorTrainingImages = 50;

struct Detection {
  bool adversarial = false;
  TwoTupleFeature feature;
  double score = 0.0;
};

/// Autoencoder + classifier + calibrated isolation forest over (MSE, PD).
class DetectorModel {
 public:
  /// Fits the forest on benign features only. Needs at least 50 images.
  static DetectorModel fit(AutoencoderModel ae, ClassifierModel classifier,
                           std::span<const Tensor> benign_images, const DetectorParams& params);

  DetectorModel(AutoencoderModel ae, ClassifierModel classifier, ScoreModel score_model,
                PdMode mode, double kl_floor);

  TwoTupleFeature extract_feature(const Tensor& image) const;
  Detection detect(const Tensor& image) const;
  Detection classify_feature(const TwoTupleFeature& feature) const;

  const AutoencoderModel& autoencoder() const { return ae_; }
  const ClassifierModel& classifier() const { return classifier_; }
  const ScoreModel& score_model() const { return score_model_; }
  PdMode pd_mode() const { return mode_; }
  double kl_floor() const { return kl_floor_; }

  std::vector<std::uint8_t> serialize() const;
  static DetectorModel deserialize(std::span<const std::uint8_t> bytes);
  void save(const std::string& path) const;
  static DetectorModel load(const std::string& path);

 private:
  AutoencoderModel ae_;
  ClassifierModel classifier_;
  ScoreModel score_model_;
  PdMode mode_;
  double kl_floor_;
};

struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

struct DetectionMetrics {
  ConfusionCounts counts;
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
  double tpr = 0.0;
  double fpr = 0.0;
};

/// Harmonic mean of precision and recall; 0 when both are 0.
double f1_score(double precision, double recall);
DetectionMetrics compute_metrics(const ConfusionCounts& counts);

struct NamedImageSet {
  std::string name;
  std::span<const Tensor> images;
};

struct EvalRow {
  std::string attack;
  DetectionMetrics metrics;
};

struct EvalReport {
  DetectionMetrics overall;
  std::vector<EvalRow> per_attack;
  std::size_t benign_count = 0;
  std::size_t adversarial_count = 0;
};

/// Per attack: TP/FN from that attack's images, FP/TN from the shared benign set.
EvalReport evaluate(const DetectorModel& detector, std::span<const Tensor> benign,
                    std::span<const NamedImageSet> adversarial_sets);

struct ScatterRow {
  TwoTupleFeature feature;
  bool adversarial = false;
};

std::vector<ScatterRow> scatter_rows(const DetectorModel& detector,
                                     std::span<const Tensor> benign,
                                     std::span<const Tensor> adversarial);
/// CSV with header `mse,pd,class`, class in {benign, adversarial}.
void export_scatter(const DetectorModel& detector, std::span<const Tensor> benign,
                    std::span<const Tensor> adversarial, const std::string& path);

struct TimingReport {
  std::size_t images = 0;
  double feature_seconds = 0.0;  ///< mean per image, autoencoder + classifier passes
  double scoring_seconds = 0.0;  ///< mean per image, forest scoring and threshold
  double total_seconds = 0.0;
  std::size_t autoencoder_bytes = 0;
  std::size_t classifier_bytes = 0;
  std::size_t forest_bytes = 0;
  std::size_t checkpoint_bytes = 0;
  std::size_t autoencoder_parameters = 0;
  std::size_t forest_trees = 0;
  std::size_t max_tree_nodes = 0;
};

TimingReport timing_report(const DetectorModel& detector, std::span<const Tensor> probes);

}  // namespace aeae

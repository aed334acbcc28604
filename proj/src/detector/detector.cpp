#include <algorithm>
#include <array>

#include "aeae/binary_io.hpp"
#include "aeae/detector.hpp"

// Detector container (little-endian):
//   "AEAE" | u32 version | u32 kind = 3 |
//   blob autoencoder checkpoint | blob classifier checkpoint | blob forest |
//   f64 threshold | f64 contamination | u8 pd_mode | f64 kl_floor |
//   u64 digest(autoencoder) | u64 digest(classifier) | u64 digest(forest) | u64 binding

namespace aeae {
namespace {

constexpr std::array<std::uint8_t, 4> kMagic = {'A', 'E', 'A', 'E'};
constexpr std::uint32_t kKindDetector = 3;

std::uint64_t binding_digest(std::uint64_t ae, std::uint64_t clf, std::uint64_t forest) {
  ByteWriter w;
  w.u64(ae);
  w.u64(clf);
  w.u64(forest);
  return fnv1a64(w.buffer());
}

CheckpointError corrupt(const std::string& what) {
  return CheckpointError(CheckpointError::Kind::Corrupt, "detector checkpoint: " + what);
}

}  // namespace

DetectorModel::DetectorModel(AutoencoderModel ae, ClassifierModel classifier,
                             ScoreModel score_model, PdMode mode, double kl_floor)
    : ae_(std::move(ae)),
      classifier_(std::move(classifier)),
      score_model_(std::move(score_model)),
      mode_(mode),
      kl_floor_(kl_floor) {
  if (ae_.input_shape() != classifier_.arch().input) {
    throw ShapeError("detector: autoencoder and classifier disagree on input shape");
  }
  if (!(kl_floor_ > 0.0)) throw std::invalid_argument("detector: kl_floor must be > 0");
}

DetectorModel DetectorModel::fit(AutoencoderModel ae, ClassifierModel classifier,
                                 std::span<const Tensor> benign_images,
                                 const DetectorParams& params) {
  if (benign_images.size() < kMinDetectorTrainingImages) {
    throw std::invalid_argument("fit_detector: need at least " +
                                std::to_string(kMinDetectorTrainingImages) +
                                " benign images, got " + std::to_string(benign_images.size()));
  }
  const PdMode mode = params.pd_mode.value_or(default_pd_mode(classifier.class_count()));
  std::vector<FeaturePoint> features;
  features.reserve(benign_images.size());
  for (const auto& img : benign_images) {
    features.push_back(aeae::extract_feature(ae, classifier, mode, params.kl_floor, img).point());
  }
  IsolationForest forest = IsolationForest::fit(features, params.forest);
  ScoreModel score = ScoreModel::calibrate(std::move(forest), features, params.contamination);
  return DetectorModel(std::move(ae), std::move(classifier), std::move(score), mode,
                       params.kl_floor);
}

TwoTupleFeature DetectorModel::extract_feature(const Tensor& image) const {
  return aeae::extract_feature(ae_, classifier_, mode_, kl_floor_, image);
}

Detection DetectorModel::classify_feature(const TwoTupleFeature& feature) const {
  const OutlierVerdict v = score_model_.predict(feature.point());
  return {v.outlier, feature, v.score};
}

Detection DetectorModel::detect(const Tensor& image) const {
  return classify_feature(extract_feature(image));
}

std::vector<std::uint8_t> DetectorModel::serialize() const {
  const auto ae_bytes = serialize_model(ae_);
  const auto clf_bytes = serialize_model(classifier_);
  const auto forest_bytes = score_model_.forest().serialize();
  const std::uint64_t d_ae = fnv1a64(ae_bytes);
  const std::uint64_t d_clf = fnv1a64(clf_bytes);
  const std::uint64_t d_forest = fnv1a64(forest_bytes);

  ByteWriter w;
  w.bytes(kMagic);
  w.u32(kCheckpointVersion);
  w.u32(kKindDetector);
  w.blob(ae_bytes);
  w.blob(clf_bytes);
  w.blob(forest_bytes);
  w.f64(score_model_.threshold());
  w.f64(score_model_.contamination());
  w.u8(mode_ == PdMode::KL ? 0 : 1);
  w.f64(kl_floor_);
  w.u64(d_ae);
  w.u64(d_clf);
  w.u64(d_forest);
  w.u64(binding_digest(d_ae, d_clf, d_forest));
  return w.take();
}

DetectorModel DetectorModel::deserialize(std::span<const std::uint8_t> bytes) {
  try {
    ByteReader r(bytes);
    auto magic = r.bytes(4);
    if (!std::equal(magic.begin(), magic.end(), kMagic.begin())) {
      throw CheckpointError(CheckpointError::Kind::Version, "detector checkpoint: bad magic");
    }
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
      throw CheckpointError(CheckpointError::Kind::Version,
                            "detector checkpoint: unsupported version " + std::to_string(version));
    }
    if (r.u32() != kKindDetector) {
      throw CheckpointError(CheckpointError::Kind::WrongModel,
                            "checkpoint does not hold a detector");
    }
    const auto ae_bytes = r.blob();
    const auto clf_bytes = r.blob();
    const auto forest_bytes = r.blob();
    const double threshold = r.f64();
    const double contamination = r.f64();
    const std::uint8_t mode = r.u8();
    const double kl_floor = r.f64();
    const std::uint64_t d_ae = r.u64(), d_clf = r.u64(), d_forest = r.u64(), bind = r.u64();
    if (!r.at_end()) throw corrupt("trailing bytes");
    if (mode > 1) throw corrupt("unknown pd_mode");
    if (fnv1a64(ae_bytes) != d_ae || fnv1a64(clf_bytes) != d_clf ||
        fnv1a64(forest_bytes) != d_forest || binding_digest(d_ae, d_clf, d_forest) != bind) {
      throw corrupt("component digests do not match; models are not bound together");
    }
    IsolationForest forest = IsolationForest::deserialize(forest_bytes);
    if (forest.dimensions() != 2) throw corrupt("forest is not over two-tuple features");
    return DetectorModel(deserialize_autoencoder(ae_bytes), deserialize_classifier(clf_bytes),
                         ScoreModel(std::move(forest), threshold, contamination),
                         mode == 0 ? PdMode::KL : PdMode::Label, kl_floor);
  } catch (const TruncatedInput& e) {
    throw corrupt(std::string("truncated: ") + e.what());
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw corrupt(e.what());
  }
}

void DetectorModel::save(const std::string& path) const {
  try {
    write_file_bytes(path, serialize());
  } catch (const std::runtime_error& e) {
    throw CheckpointError(CheckpointError::Kind::Io, e.what());
  }
}

DetectorModel DetectorModel::load(const std::string& path) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = read_file_bytes(path);
  } catch (const std::runtime_error& e) {
    throw CheckpointError(CheckpointError::Kind::Io, e.what());
  }
  return deserialize(bytes);
}

}  // namespace aeae

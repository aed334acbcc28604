#include <algorithm>
#include <cctype>
#include <cmath>

#include "aeae/detector.hpp"

namespace aeae {

std::string to_string(PdMode mode) { return mode == PdMode::KL ? "kl" : "label"; }

PdMode parse_pd_mode(const std::string& name) {
  std::string lower = name;
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "kl") return PdMode::KL;
  if (lower == "label") return PdMode::Label;
  throw std::invalid_argument("unknown pd_mode '" + name + "' (expected kl or label)");
}

PdMode default_pd_mode(std::size_t classes) {
  return classes <= 100 ? PdMode::KL : PdMode::Label;
}

double image_mse(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "image_mse");
  if (a.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

double reconstruction_error(const AutoencoderModel& ae, const Tensor& image) {
  return image_mse(image, ae.reconstruct(image));
}

namespace {

std::vector<double> clamp_and_normalise(std::span<const double> v, double floor) {
  std::vector<double> out(v.begin(), v.end());
  double total = 0.0;
  for (double& x : out) {
    x = std::max(x, floor);
    total += x;
  }
  for (double& x : out) x /= total;
  return out;
}

}  // namespace

double kl_divergence(std::span<const double> p, std::span<const double> q, double floor) {
  if (p.size() != q.size()) {
    throw std::invalid_argument("kl_divergence: lengths " + std::to_string(p.size()) + " and " +
                                std::to_string(q.size()) + " differ");
  }
  if (p.empty()) throw std::invalid_argument("kl_divergence: empty distributions");
  const auto pc = clamp_and_normalise(p, floor);
  const auto qc = clamp_and_normalise(q, floor);
  double kl = 0.0;
  for (std::size_t i = 0; i < pc.size(); ++i) kl += pc[i] * std::log(pc[i] / qc[i]);
  return std::max(kl, 0.0);
}

int label_distance(const DifferentiableClassifier& classifier, const Tensor& image,
                   const Tensor& reconstruction) {
  return classifier.predict_label(image) != classifier.predict_label(reconstruction) ? 1 : 0;
}

TwoTupleFeature extract_feature(const AutoencoderModel& ae,
                                const DifferentiableClassifier& classifier, PdMode mode,
                                double kl_floor, const Tensor& image) {
  const Tensor recon = ae.reconstruct(image);
  TwoTupleFeature f;
  f.mse = image_mse(image, recon);
  const Tensor z_x = classifier.logits(image);
  const Tensor z_ae = classifier.logits(recon);
  if (mode == PdMode::KL) {
    f.pd = kl_divergence(softmax_rows(z_x).data(), softmax_rows(z_ae).data(), kl_floor);
  } else {
    f.pd = argmax(z_x.data()) != argmax(z_ae.data()) ? 1.0 : 0.0;
  }
  return f;
}

}  // namespace aeae

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "aeae/autodiff.hpp"
#include "aeae/tensor.hpp"

namespace aeae {

/// Channels-first image geometry. Single images are [C, H, W] tensors.
struct ImageShape {
  std::size_t channels = 1;
  std::size_t height = 28;
  std::size_t width = 28;

  Shape chw() const { return {channels, height, width}; }
  Shape batch(std::size_t n) const { return {n, channels, height, width}; }
  std::size_t pixels() const { return channels * height * width; }
  friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

/// Stacks equally-shaped [C, H, W] images into one [N, C, H, W] batch.
Tensor stack_images(std::span<const Tensor> images);
Tensor stack_images(std::span<const Tensor> images, std::span<const std::size_t> order);
void require_image_shape(const Tensor& image, const ImageShape& shape, const char* what);

struct Parameter {
  std::string name;
  Tensor value;
};
using ParameterSet = std::vector<Parameter>;

std::size_t count_parameters(const ParameterSet& params);
/// Places every parameter on the tape as a gradient-tracking leaf.
std::vector<Var> bind_parameters(Tape& tape, const ParameterSet& params, bool requires_grad);

/// Anything the attacks can differentiate through: logits plus the
/// vector-Jacobian product of the logits with respect to the input image.
class DifferentiableClassifier {
 public:
  virtual ~DifferentiableClassifier() = default;
  virtual std::size_t class_count() const = 0;
  virtual Shape image_shape() const = 0;
  virtual Tensor logits(const Tensor& image) const = 0;
  /// Maps the logits of a forward pass to the seed of the reverse pass.
  using SeedFn = std::function<Tensor(const Tensor& logits)>;

  /// Gradient of <seed(logits), logits(image)> with respect to image, from a
  /// single forward/backward pass. Writes the logits to `logits_out` when
  /// non-null.
  virtual Tensor input_gradient(const Tensor& image, const SeedFn& seed,
                                Tensor* logits_out = nullptr) const = 0;

  /// Vector-Jacobian product with a fixed seed.
  Tensor logits_vjp(const Tensor& image, const Tensor& seed,
                    Tensor* logits_out = nullptr) const;

  Tensor predict(const Tensor& image) const;
  std::size_t predict_label(const Tensor& image) const;
};

/// Index of the largest entry; lowest index wins ties.
std::size_t argmax(std::span<const double> values);

/// Shallow convolutional autoencoder:
///   Conv3x3(F)+ReLU -> MaxPool2 -> Conv3x3(F)+ReLU -> Upsample2 -> Conv3x3(C)+Sigmoid
class AutoencoderModel {
 public:
  static AutoencoderModel build(const ImageShape& input, std::size_t filters,
                                std::uint64_t seed = 0);

  const ImageShape& input_shape() const { return input_; }
  std::size_t filters() const { return filters_; }
  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }
  std::size_t parameter_count() const { return count_parameters(params_); }

  /// Layer name and output shape [C, H, W] after each stage.
  std::vector<std::pair<std::string, Shape>> layer_shapes() const;

  Var forward(Tape& tape, Var batch, std::span<const Var> params) const;
  Tensor reconstruct(const Tensor& image) const;
  Tensor reconstruct_batch(const Tensor& batch) const;

 private:
  AutoencoderModel(ImageShape input, std::size_t filters, ParameterSet params)
      : input_(input), filters_(filters), params_(std::move(params)) {}
  friend AutoencoderModel make_autoencoder(const ImageShape&, std::size_t, ParameterSet);

  ImageShape input_;
  std::size_t filters_;
  ParameterSet params_;
};

/// Target classifier stand-in: two Conv3x3+ReLU+MaxPool2 blocks and a dense head.
struct ClassifierArch {
  ImageShape input;
  std::size_t conv1_filters = 8;
  std::size_t conv2_filters = 16;
  std::size_t classes = 10;
  friend bool operator==(const ClassifierArch&, const ClassifierArch&) = default;
};

class ClassifierModel : public DifferentiableClassifier {
 public:
  static ClassifierModel build(const ClassifierArch& arch, std::uint64_t seed = 0);

  const ClassifierArch& arch() const { return arch_; }
  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }
  std::size_t parameter_count() const { return count_parameters(params_); }

  Var forward(Tape& tape, Var batch, std::span<const Var> params) const;
  Tensor logits_batch(const Tensor& batch) const;

  std::size_t class_count() const override { return arch_.classes; }
  Shape image_shape() const override { return arch_.input.chw(); }
  Tensor logits(const Tensor& image) const override;
  Tensor input_gradient(const Tensor& image, const SeedFn& seed,
                        Tensor* logits_out = nullptr) const override;

 private:
  ClassifierModel(ClassifierArch arch, ParameterSet params)
      : arch_(arch), params_(std::move(params)) {}
  friend ClassifierModel make_classifier(const ClassifierArch&, ParameterSet);

  ClassifierArch arch_;
  ParameterSet params_;
};

/// logits = weight * flatten(x) + bias. Used to exercise attacks on exact
/// affine decision boundaries.
class LinearClassifier : public DifferentiableClassifier {
 public:
  LinearClassifier(Shape input, Tensor weight, Tensor bias);

  std::size_t class_count() const override { return weight_.dim(0); }
  Shape image_shape() const override { return input_; }
  Tensor logits(const Tensor& image) const override;
  Tensor input_gradient(const Tensor& image, const SeedFn& seed,
                        Tensor* logits_out = nullptr) const override;

 private:
  Shape input_;
  Tensor weight_;
  Tensor bias_;
};

struct AdamOptions {
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias-corrected moments, one moment pair per parameter.
class AdamState {
 public:
  AdamState(const ParameterSet& params, AdamOptions options);

  void step(ParameterSet& params, std::span<const Tensor> grads);
  std::size_t step_count() const { return step_; }
  const AdamOptions& options() const { return options_; }

 private:
  AdamOptions options_;
  std::vector<Tensor> first_;
  std::vector<Tensor> second_;
  std::size_t step_ = 0;
};

struct TrainConfig {
  double learning_rate = 0.01;
  std::size_t batch_size = 64;
  std::size_t epochs = 50;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainHistory {
  std::vector<double> loss;      ///< mean training loss per epoch
  std::vector<double> accuracy;  ///< training accuracy per epoch (classifier only)
};

/// Minimises the batch-mean of per-image MSE between images and reconstructions.
TrainHistory train_autoencoder(AutoencoderModel& model, std::span<const Tensor> images,
                               const TrainConfig& cfg);
TrainHistory train_classifier(ClassifierModel& model, std::span<const Tensor> images,
                              std::span<const std::size_t> labels, const TrainConfig& cfg);

double classification_accuracy(const DifferentiableClassifier& model,
                               std::span<const Tensor> images,
                               std::span<const std::size_t> labels);
double mean_reconstruction_mse(const AutoencoderModel& model, std::span<const Tensor> images);

/// Checkpoint failures, split by cause.
class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { Io, Corrupt, Version, WrongModel };
  CheckpointError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_model(const AutoencoderModel& model);
std::vector<std::uint8_t> serialize_model(const ClassifierModel& model);
AutoencoderModel deserialize_autoencoder(std::span<const std::uint8_t> bytes);
ClassifierModel deserialize_classifier(std::span<const std::uint8_t> bytes);

void save_model(const AutoencoderModel& model, const std::string& path);
void save_model(const ClassifierModel& model, const std::string& path);
AutoencoderModel load_autoencoder(const std::string& path);
ClassifierModel load_classifier(const std::string& path);

}  // namespace aeae

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "aeae/models.hpp"

namespace aeae {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
}

namespace {

// One pass of mini-batch Adam. `loss_fn` builds the loss for a batch on the
// tape and returns it together with the number of correct predictions.
template <typename LossFn>
std::pair<double, std::size_t> run_epoch(ParameterSet& params, AdamState& adam,
                                         std::vector<std::size_t>& order,
                                         std::mt19937_64& rng, std::size_t batch_size,
                                         LossFn&& loss_fn) {
  std::shuffle(order.begin(), order.end(), rng);
  double loss_sum = 0.0;
  std::size_t correct = 0;
  std::vector<Tensor> grads(params.size());
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    std::span<const std::size_t> idx(order.data() + start, end - start);
    Tape tape;
    auto vars = bind_parameters(tape, params, true);
    auto [loss, hits] = loss_fn(tape, vars, idx);
    tape.backward(loss);
    for (std::size_t i = 0; i < vars.size(); ++i) grads[i] = vars[i].grad();
    adam.step(params, grads);
    loss_sum += loss.value().item() * static_cast<double>(idx.size());
    correct += hits;
  }
  return {loss_sum / static_cast<double>(order.size()), correct};
}

void check_finite(double loss, std::size_t epoch) {
  if (!std::isfinite(loss)) {
    throw std::runtime_error("training diverged: non-finite loss at epoch " +
                             std::to_string(epoch + 1));
  }
}

}  // namespace

TrainHistory train_autoencoder(AutoencoderModel& model, std::span<const Tensor> images,
                               const TrainConfig& cfg) {
  cfg.validate();
  if (images.empty()) throw std::invalid_argument("train_autoencoder: empty dataset");
  for (const auto& img : images) require_image_shape(img, model.input_shape(), "train_autoencoder");
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  AdamState adam(model.parameters(), AdamOptions{.learning_rate = cfg.learning_rate});
  TrainHistory history;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto [loss, unused] = run_epoch(
        model.parameters(), adam, order, rng, cfg.batch_size,
        [&](Tape& tape, std::span<const Var> vars, std::span<const std::size_t> idx) {
          Var x = tape.constant(stack_images(images, idx));
          Var recon = model.forward(tape, x, vars);
          return std::pair{ops::mse(recon, x), std::size_t{0}};
        });
    (void)unused;
    check_finite(loss, epoch);
    history.loss.push_back(loss);
  }
  return history;
}

TrainHistory train_classifier(ClassifierModel& model, std::span<const Tensor> images,
                              std::span<const std::size_t> labels, const TrainConfig& cfg) {
  cfg.validate();
  if (images.empty()) throw std::invalid_argument("train_classifier: empty dataset");
  if (labels.size() != images.size()) {
    throw std::invalid_argument("train_classifier: label count does not match image count");
  }
  for (std::size_t l : labels) {
    if (l >= model.class_count()) {
      throw std::out_of_range("train_classifier: label " + std::to_string(l) + " >= " +
                              std::to_string(model.class_count()) + " classes");
    }
  }
  for (const auto& img : images) require_image_shape(img, model.arch().input, "train_classifier");
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  AdamState adam(model.parameters(), AdamOptions{.learning_rate = cfg.learning_rate});
  TrainHistory history;
  std::vector<std::size_t> batch_labels;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto [loss, correct] = run_epoch(
        model.parameters(), adam, order, rng, cfg.batch_size,
        [&](Tape& tape, std::span<const Var> vars, std::span<const std::size_t> idx) {
          batch_labels.clear();
          for (std::size_t i : idx) batch_labels.push_back(labels[i]);
          Var z = model.forward(tape, tape.constant(stack_images(images, idx)), vars);
          std::size_t hits = 0;
          const std::size_t k = model.class_count();
          for (std::size_t r = 0; r < idx.size(); ++r) {
            if (argmax(z.value().data().subspan(r * k, k)) == batch_labels[r]) ++hits;
          }
          return std::pair{ops::cross_entropy(z, batch_labels), hits};
        });
    check_finite(loss, epoch);
    history.loss.push_back(loss);
    history.accuracy.push_back(static_cast<double>(correct) / static_cast<double>(images.size()));
  }
  return history;
}

double classification_accuracy(const DifferentiableClassifier& model,
                               std::span<const Tensor> images,
                               std::span<const std::size_t> labels) {
  if (images.empty() || images.size() != labels.size()) {
    throw std::invalid_argument("classification_accuracy: need matching non-empty sets");
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (model.predict_label(images[i]) == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(images.size());
}

double mean_reconstruction_mse(const AutoencoderModel& model, std::span<const Tensor> images) {
  if (images.empty()) throw std::invalid_argument("mean_reconstruction_mse: empty set");
  double total = 0.0;
  for (const auto& img : images) {
    Tensor recon = model.reconstruct(img);
    double s = 0.0;
    for (std::size_t i = 0; i < img.size(); ++i) s += (img[i] - recon[i]) * (img[i] - recon[i]);
    total += s / static_cast<double>(img.size());
  }
  return total / static_cast<double>(images.size());
}

}  // namespace aeae

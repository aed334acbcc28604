#include <algorithm>
#include <numeric>

#include "aeae/models.hpp"

namespace aeae {

void require_image_shape(const Tensor& image, const ImageShape& shape, const char* what) {
  if (image.shape() != shape.chw()) {
    throw ShapeError(std::string(what) + ": expected image " + shape_to_string(shape.chw()) +
                     ", got " + shape_to_string(image.shape()));
  }
}

Tensor stack_images(std::span<const Tensor> images) {
  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  return stack_images(images, order);
}

Tensor stack_images(std::span<const Tensor> images, std::span<const std::size_t> order) {
  if (order.empty()) throw ShapeError("stack_images: no images");
  const Shape& chw = images[order.front()].shape();
  Shape batch{order.size()};
  batch.insert(batch.end(), chw.begin(), chw.end());
  std::vector<double> data;
  data.reserve(shape_size(batch));
  for (std::size_t idx : order) {
    const Tensor& img = images[idx];
    if (img.shape() != chw) {
      throw ShapeError("stack_images: mixed shapes " + shape_to_string(chw) + " and " +
                       shape_to_string(img.shape()));
    }
    data.insert(data.end(), img.values().begin(), img.values().end());
  }
  return Tensor(std::move(batch), std::move(data));
}

std::size_t count_parameters(const ParameterSet& params) {
  std::size_t total = 0;
  for (const auto& p : params) total += p.value.size();
  return total;
}

std::vector<Var> bind_parameters(Tape& tape, const ParameterSet& params, bool requires_grad) {
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const auto& p : params) vars.push_back(tape.leaf(p.value, requires_grad));
  return vars;
}

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("argmax of empty vector");
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) -
                                  values.begin());
}

Tensor DifferentiableClassifier::predict(const Tensor& image) const {
  return softmax_rows(logits(image));
}

std::size_t DifferentiableClassifier::predict_label(const Tensor& image) const {
  return argmax(logits(image).data());
}

Tensor DifferentiableClassifier::logits_vjp(const Tensor& image, const Tensor& seed,
                                            Tensor* logits_out) const {
  return input_gradient(
      image, [&](const Tensor&) { return seed; }, logits_out);
}

LinearClassifier::LinearClassifier(Shape input, Tensor weight, Tensor bias)
    : input_(std::move(input)), weight_(std::move(weight)), bias_(std::move(bias)) {
  if (weight_.rank() != 2 || weight_.dim(1) != shape_size(input_) || bias_.rank() != 1 ||
      bias_.dim(0) != weight_.dim(0)) {
    throw ShapeError("LinearClassifier: weight " + shape_to_string(weight_.shape()) +
                     " / bias " + shape_to_string(bias_.shape()) + " do not fit input " +
                     shape_to_string(input_));
  }
}

Tensor LinearClassifier::logits(const Tensor& image) const {
  if (image.shape() != input_) throw ShapeError("LinearClassifier: input shape mismatch");
  const std::size_t k = weight_.dim(0), d = weight_.dim(1);
  Tensor out(Shape{k});
  for (std::size_t i = 0; i < k; ++i) {
    double acc = bias_[i];
    for (std::size_t j = 0; j < d; ++j) acc += weight_[i * d + j] * image[j];
    out[i] = acc;
  }
  return out;
}

Tensor LinearClassifier::input_gradient(const Tensor& image, const SeedFn& seed_fn,
                                        Tensor* logits_out) const {
  const std::size_t k = weight_.dim(0), d = weight_.dim(1);
  Tensor z = logits(image);
  Tensor seed = seed_fn(z);
  if (seed.size() != k) throw ShapeError("LinearClassifier: seed length mismatch");
  Tensor grad(input_, 0.0);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < d; ++j) grad[j] += seed[i] * weight_[i * d + j];
  if (logits_out) *logits_out = std::move(z);
  return grad;
}

}  // namespace aeae

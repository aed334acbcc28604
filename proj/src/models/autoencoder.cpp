#include <cmath>

#include "internal.hpp"

namespace aeae {

Tensor he_normal(Shape shape, std::mt19937_64& rng) {
  std::size_t fan_in = 1;
  for (std::size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = dist(rng);
  return t;
}

AutoencoderModel make_autoencoder(const ImageShape& input, std::size_t filters,
                                  ParameterSet params) {
  return AutoencoderModel(input, filters, std::move(params));
}

AutoencoderModel AutoencoderModel::build(const ImageShape& input, std::size_t filters,
                                         std::uint64_t seed) {
  if (input.height % 2 != 0 || input.width % 2 != 0 || input.height == 0 || input.width == 0) {
    throw ShapeError("autoencoder: height and width must be even and non-zero, got " +
                     shape_to_string(input.chw()));
  }
  if (filters == 0 || input.channels == 0) throw ShapeError("autoencoder: empty layer");
  std::mt19937_64 rng(seed);
  const std::size_t c = input.channels;
  ParameterSet params;
  params.push_back({"enc.conv.weight", he_normal({filters, c, 3, 3}, rng)});
  params.push_back({"enc.conv.bias", Tensor(Shape{filters}, 0.0)});
  params.push_back({"dec.conv1.weight", he_normal({filters, filters, 3, 3}, rng)});
  params.push_back({"dec.conv1.bias", Tensor(Shape{filters}, 0.0)});
  params.push_back({"dec.conv2.weight", he_normal({c, filters, 3, 3}, rng)});
  params.push_back({"dec.conv2.bias", Tensor(Shape{c}, 0.0)});
  return AutoencoderModel(input, filters, std::move(params));
}

std::vector<std::pair<std::string, Shape>> AutoencoderModel::layer_shapes() const {
  const std::size_t h = input_.height, w = input_.width, f = filters_;
  return {
      {"input", input_.chw()},
      {"conv2d_relu", {f, h, w}},
      {"max_pooling", {f, h / 2, w / 2}},
      {"conv2d_relu", {f, h / 2, w / 2}},
      {"up_sampling", {f, h, w}},
      {"conv2d_sigmoid", input_.chw()},
  };
}

Var AutoencoderModel::forward(Tape& tape, Var batch, std::span<const Var> p) const {
  (void)tape;
  if (p.size() != 6) throw std::invalid_argument("autoencoder expects 6 parameter tensors");
  Var h = ops::relu(ops::add_bias(ops::conv2d(batch, p[0], 1, 1), p[1]));
  h = ops::maxpool2d(h, 2);
  h = ops::relu(ops::add_bias(ops::conv2d(h, p[2], 1, 1), p[3]));
  h = ops::upsample2d(h, 2);
  return ops::sigmoid(ops::add_bias(ops::conv2d(h, p[4], 1, 1), p[5]));
}

Tensor AutoencoderModel::reconstruct_batch(const Tensor& batch) const {
  if (batch.rank() != 4 || Shape(batch.shape().begin() + 1, batch.shape().end()) != input_.chw()) {
    throw ShapeError("reconstruct: expected batch of " + shape_to_string(input_.chw()) +
                     ", got " + shape_to_string(batch.shape()));
  }
  Tape tape;
  auto vars = bind_parameters(tape, params_, false);
  return forward(tape, tape.constant(batch), vars).value();
}

Tensor AutoencoderModel::reconstruct(const Tensor& image) const {
  require_image_shape(image, input_, "reconstruct");
  return reconstruct_batch(image.reshaped(input_.batch(1))).reshaped(input_.chw());
}

}  // namespace aeae

#include <cmath>

#include "internal.hpp"

namespace aeae {

ClassifierModel make_classifier(const ClassifierArch& arch, ParameterSet params) {
  return ClassifierModel(arch, std::move(params));
}

ClassifierModel ClassifierModel::build(const ClassifierArch& arch, std::uint64_t seed) {
  const ImageShape& in = arch.input;
  if (in.height % 4 != 0 || in.width % 4 != 0 || in.height == 0 || in.width == 0) {
    throw ShapeError("classifier: height and width must be multiples of 4, got " +
                     shape_to_string(in.chw()));
  }
  if (arch.classes < 1 || arch.conv1_filters == 0 || arch.conv2_filters == 0) {
    throw ShapeError("classifier: empty layer");
  }
  std::mt19937_64 rng(seed);
  const std::size_t flat = arch.conv2_filters * (in.height / 4) * (in.width / 4);
  ParameterSet params;
  params.push_back({"block1.conv.weight", he_normal({arch.conv1_filters, in.channels, 3, 3}, rng)});
  params.push_back({"block1.conv.bias", Tensor(Shape{arch.conv1_filters}, 0.0)});
  params.push_back(
      {"block2.conv.weight", he_normal({arch.conv2_filters, arch.conv1_filters, 3, 3}, rng)});
  params.push_back({"block2.conv.bias", Tensor(Shape{arch.conv2_filters}, 0.0)});
  Tensor head = he_normal({arch.classes, flat}, rng);
  for (double& v : head.values()) v *= std::sqrt(0.5);  // fan-in scaling without the ReLU gain
  params.push_back({"head.weight", std::move(head)});
  params.push_back({"head.bias", Tensor(Shape{arch.classes}, 0.0)});
  return ClassifierModel(arch, std::move(params));
}

Var ClassifierModel::forward(Tape& tape, Var batch, std::span<const Var> p) const {
  (void)tape;
  if (p.size() != 6) throw std::invalid_argument("classifier expects 6 parameter tensors");
  Var h = ops::relu(ops::add_bias(ops::conv2d(batch, p[0], 1, 1), p[1]));
  h = ops::maxpool2d(h, 2);
  h = ops::relu(ops::add_bias(ops::conv2d(h, p[2], 1, 1), p[3]));
  h = ops::maxpool2d(h, 2);
  const std::size_t n = h.shape()[0];
  h = ops::reshape(h, {n, h.value().size() / n});
  return ops::dense(h, p[4], p[5]);
}

Tensor ClassifierModel::logits_batch(const Tensor& batch) const {
  if (batch.rank() != 4 ||
      Shape(batch.shape().begin() + 1, batch.shape().end()) != arch_.input.chw()) {
    throw ShapeError("classifier: expected batch of " + shape_to_string(arch_.input.chw()) +
                     ", got " + shape_to_string(batch.shape()));
  }
  Tape tape;
  auto vars = bind_parameters(tape, params_, false);
  return forward(tape, tape.constant(batch), vars).value();
}

Tensor ClassifierModel::logits(const Tensor& image) const {
  require_image_shape(image, arch_.input, "classifier");
  return logits_batch(image.reshaped(arch_.input.batch(1))).reshaped({arch_.classes});
}

Tensor ClassifierModel::input_gradient(const Tensor& image, const SeedFn& seed,
                                       Tensor* logits_out) const {
  require_image_shape(image, arch_.input, "classifier");
  Tape tape;
  auto vars = bind_parameters(tape, params_, false);
  Var x = tape.leaf(image.reshaped(arch_.input.batch(1)), true);
  Var z = forward(tape, x, vars);
  Tensor logits = z.value().reshaped({arch_.classes});
  Tensor s = seed(logits);
  if (s.size() != arch_.classes) throw ShapeError("classifier: seed length mismatch");
  tape.backward(z, s.reshaped(z.shape()));
  if (logits_out) *logits_out = std::move(logits);
  return x.grad().reshaped(arch_.input.chw());
}

}  // namespace aeae

#include "masscrf/fcn.hpp"

#include <cmath>

namespace masscrf {

FcnConfig FcnConfig::table_row(const std::string& name) {
  FcnConfig c;
  c.name = name;
  if (name == "fcn1") {
    c.l1 = {6, 5, 5};
    c.l2 = {12, 5, 5};
    c.l3 = {588, 7, 7};
  } else if (name == "fcn2") {
    c.l1 = {9, 4, 4};
    c.l2 = {12, 4, 4};
    c.l3 = {588, 7, 7};
  } else if (name == "fcn3") {
    c.l1 = {16, 3, 3};
    c.l2 = {13, 3, 3};
    c.l3 = {415, 8, 8};
  } else if (name == "fcn4") {
    c.l1 = {37, 2, 2};
    c.l2 = {12, 2, 2};
    c.l3 = {355, 9, 9};
  } else {
    throw BadParamError("unknown FCN row '" + name + "' (expected fcn1|fcn2|fcn3|fcn4)");
  }
  c.validate();
  return c;
}

void FcnConfig::validate() const {
  if (image_size < 4 || image_size % 4 != 0)
    throw BadParamError("fcn image size must be a positive multiple of 4");
  for (const ConvSpec* l : {&l1, &l2, &l3})
    if (l->filters < 1 || l->kh < 1 || l->kw < 1)
      throw BadParamError("fcn layer spec must have positive extents");
  if (l3.kh != l3.kw || l3.kh > pooled_size())
    throw BadParamError("layer-3 kernel must be square and fit the pooled map");
}

namespace {

Tensor glorot(Shape shape, Index fan_in, Index fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Array values(shape_size(shape));
  for (Index i = 0; i < values.size(); ++i) values[i] = (2.0 * rng.uniform01() - 1.0) * limit;
  return Tensor::from_array(std::move(shape), std::move(values), true);
}

}  // namespace

FcnModel FcnModel::init(const FcnConfig& config, const Array& prior, Rng& rng) {
  config.validate();
  const Index S = config.image_size;
  if (prior.size() != S * S)
    throw ShapeMismatchError("prior map does not match the configured image size");
  if ((prior < 0.0).any() || (prior > 1.0).any())
    throw BadParamError("prior map entries must lie in [0,1]");

  FcnModel m;
  m.config = config;
  m.k1 = glorot({config.l1.filters, 1, config.l1.kh, config.l1.kw}, config.l1.kh * config.l1.kw,
                config.l1.filters * config.l1.kh * config.l1.kw, rng);
  m.b1 = Tensor::zeros({config.l1.filters}, true);
  m.k2 = glorot({config.l2.filters, config.l1.filters, config.l2.kh, config.l2.kw},
                config.l1.filters * config.l2.kh * config.l2.kw,
                config.l2.filters * config.l2.kh * config.l2.kw, rng);
  m.b2 = Tensor::zeros({config.l2.filters}, true);
  m.k3 = glorot({config.l3.filters, config.l2.filters, config.l3.kh, config.l3.kw},
                config.l2.filters * config.l3.kh * config.l3.kw,
                config.l3.filters * config.l3.kh * config.l3.kw, rng);
  m.b3 = Tensor::zeros({config.l3.filters}, true);
  m.kd = glorot({config.l3.filters, 2, S, S}, config.l3.filters * S * S, 2 * S * S, rng);

  Array bias(2 * S * S);
  bias.head(S * S) = (1.0 - prior + 1e-6).log();  // channel 0: background
  bias.tail(S * S) = (prior + 1e-6).log();        // channel 1: mass
  m.prior_bias = Tensor::from_array({2, S, S}, std::move(bias), true);
  return m;
}

std::vector<Tensor*> FcnModel::parameters() {
  return {&k1, &b1, &k2, &b2, &k3, &b3, &kd, &prior_bias};
}

std::vector<const Tensor*> FcnModel::parameters() const {
  return {&k1, &b1, &k2, &b2, &k3, &b3, &kd, &prior_bias};
}

Index FcnModel::param_count_conv_layers() const {
  return k1.size() + b1.size() + k2.size() + b2.size() + k3.size() + b3.size();
}

Tensor fcn_forward(const FcnModel& model, const Tensor& images) {
  const Index S = model.config.image_size;
  if (images.order() != 4 || images.dim(1) != 1 || images.dim(2) != S || images.dim(3) != S)
    throw ShapeMismatchError("fcn_forward expects images [B,1," + std::to_string(S) + "," +
                             std::to_string(S) + "]");
  Tensor h = maxpool2x2(tanh(conv2d(images, model.k1, model.b1, Padding::Same)));
  h = maxpool2x2(tanh(conv2d(h, model.k2, model.b2, Padding::Same)));
  h = tanh(conv2d(h, model.k3, model.b3, Padding::Valid));
  h = transposed_conv2d(h, model.kd, Tensor::zeros({2}), 1);
  h = center_crop(h, S, S);
  h = add_bias_map(h, model.prior_bias);
  return softmax_channels(h);
}

Tensor unary_from_fcn(const Tensor& probs) {
  return neg(log(clamp_min(probs, 1e-12)));
}

Tensor fuse_unaries(std::span<const Tensor> fields, std::span<const Tensor> weights) {
  if (fields.empty() || fields.size() != weights.size())
    throw LengthMismatchError("fuse_unaries needs one weight per unary field");
  return linear_combination(weights, fields);
}

Tensor fcn_nll_loss(const Tensor& probs, const LabelArray& labels) {
  return nll_mean(probs, labels);
}

}  // namespace masscrf

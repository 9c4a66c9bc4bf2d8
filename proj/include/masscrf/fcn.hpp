#pragma once

#include <string>

#include "masscrf/ops.hpp"
#include "masscrf/rng.hpp"

namespace masscrf {

struct ConvSpec {
  Index filters = 0, kh = 0, kw = 0;
};

// One sub-network row: layers 1-2 are same-padded convolutions each followed
// by tanh and a 2x2 max pool, layer 3 is a valid convolution with tanh, and
// the head is a stride-1 transposed convolution with an image-sized kernel,
// center-cropped back to the image size, plus the position-prior bias and a
// channel softmax.
struct FcnConfig {
  std::string name = "fcn1";
  Index image_size = 40;
  ConvSpec l1, l2, l3;

  static FcnConfig table_row(const std::string& name);
  void validate() const;

  Index pooled_size() const { return image_size / 4; }
  Index l3_out() const { return pooled_size() - l3.kh + 1; }
  Index deconv_out() const { return l3_out() - 1 + image_size; }
};

struct FcnModel {
  FcnConfig config;
  Tensor k1, b1, k2, b2, k3, b3;  // conv kernels [Cout,Cin,kh,kw] and biases
  Tensor kd;                       // transposed-conv kernel [C3,2,S,S]
  Tensor prior_bias;               // [2,S,S], trainable, log-prior initialized

  // Glorot-uniform kernels, zero conv biases, prior map of foreground
  // probabilities (length S*S) smoothed into the final-layer bias.
  static FcnModel init(const FcnConfig& config, const Array& prior, Rng& rng);

  // Fixed order: k1,b1,k2,b2,k3,b3,kd,prior_bias.
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  Index param_count_conv_layers() const;
};

// images [B,1,S,S] -> per-pixel class probabilities [B,2,S,S].
Tensor fcn_forward(const FcnModel& model, const Tensor& images);

// psi_u = -log(max(p, 1e-12)), same shape as the probability field.
Tensor unary_from_fcn(const Tensor& probs);

// sum_k weights[k] * fields[k]; scalar tensor weights.
Tensor fuse_unaries(std::span<const Tensor> fields, std::span<const Tensor> weights);

// Mean over batch entries and pixels of -log p(true label).
Tensor fcn_nll_loss(const Tensor& probs, const LabelArray& labels);

}  // namespace masscrf

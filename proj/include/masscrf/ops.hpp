#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "masscrf/tensor.hpp"

namespace masscrf {

using LabelArray = Eigen::Array<std::uint8_t, Eigen::Dynamic, 1>;

enum class Padding { Same, Valid };

// --- convolutional stack -------------------------------------------------
// input [B,Cin,H,W], kernel [Cout,Cin,kh,kw], bias [Cout]. Same-padding for
// an even kernel puts the extra row/column of zeros at the bottom/right.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, Padding padding);

// input [B,Cin,H,W], kernel [Cin,Cout,kh,kw], bias [Cout]; output spatial
// size (H-1)*stride + kh.
Tensor transposed_conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                         Index stride);

// 2x2 window, stride 2; spatial dims must be even. Ties resolve to the
// first maximum in row-major window order.
Tensor maxpool2x2(const Tensor& input);

Tensor tanh(const Tensor& input);

// Softmax over the channel axis of [B,C,H,W].
Tensor softmax_channels(const Tensor& input);
// Softmax over rows of [L,N] (per-column distributions).
Tensor softmax_labels(const Tensor& input);

// --- elementwise and reductions ------------------------------------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor clamp_min(const Tensor& a, double floor);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sum_squares(const Tensor& a);

// --- linear algebra -------------------------------------------------------
// a [m,k] x b [k,n] -> [m,n].
Tensor matmul(const Tensor& a, const Tensor& b);

// sum_i coeffs[i] * terms[i]; every coeff is a scalar tensor, every term has
// the shape of terms[0].
Tensor linear_combination(std::span<const Tensor> coeffs, std::span<const Tensor> terms);
// sum_i coeffs[i] * terms[i] with constant coefficients.
Tensor weighted_sum(std::span<const double> coeffs, std::span<const Tensor> terms);

// --- structured-prediction helpers ---------------------------------------
// Swap the two rows of [2,N]: the Potts compatibility transform mu*Q for
// binary labels.
Tensor flip_labels(const Tensor& q);

// Spatially centered crop of [B,C,H,W] to out_h x out_w.
Tensor center_crop(const Tensor& input, Index out_h, Index out_w);

// input [B,C,H,W] + bias [C,H,W] broadcast over the batch.
Tensor add_bias_map(const Tensor& input, const Tensor& bias);

// batch [B,C,H,W] -> the flattened entry b as [C, H*W].
Tensor slice_image(const Tensor& batch, Index b);

// reshape preserving element order.
Tensor reshape(const Tensor& input, Shape shape);

// --- likelihoods ----------------------------------------------------------
// Sum over pixels of log max(p_true, 1e-12). field is [2,N] with labels of
// length N, or [B,2,H,W] with B*H*W labels (batch-major, row-major pixels).
Tensor log_likelihood_sum(const Tensor& field, const LabelArray& labels);

// Mean negative log-likelihood over all pixels (and batch entries).
Tensor nll_mean(const Tensor& field, const LabelArray& labels);

// --- dense pairwise kernels ------------------------------------------------
// Gaussian spatial affinity exp(-|pi-pj|^2 / (2 theta^2)) over an h x w
// grid, zero diagonal. Plain data: positions never carry gradients.
Array spatial_affinity(Index h, Index w, double theta);

// Bilateral kernel exp(-|pi-pj|^2/(2 ta^2) - (Ii-Ij)^2/(2 tb^2)) with zero
// diagonal, differentiable w.r.t. the intensity image. `spatial_part` is
// spatial_affinity(h, w, theta_alpha); image is [1,1,H,W] or [H*W].
Tensor bilateral_kernel(const Tensor& image, const Array& spatial_part, double theta_beta);

}  // namespace masscrf

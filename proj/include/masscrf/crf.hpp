#pragma once

#include <span>
#include <vector>

#include "masscrf/ops.hpp"

namespace masscrf {

enum class UpdateForm { Paper, Conventional };

// Hyper-parameters of the dense pairwise CRF. The trainable kernel weights
// w^(m) live outside this struct (scalar tensors owned by the model set).
struct CrfParams {
  double theta_alpha = 3.0;  // bilateral spatial bandwidth, px
  double theta_beta = 0.1;   // bilateral intensity bandwidth
  double theta_gamma = 3.0;  // spatial-only bandwidth, px
  int t_train = 5;
  int t_test = 10;
  UpdateForm update_form = UpdateForm::Paper;
  double w_init = 1.0;

  void validate() const;
};

// Two scalar kernel weights, trainable.
std::vector<Tensor> init_kernel_weights(const CrfParams& params);

// Dense kernels for one image [1,1,H,W] (or [C,N]/flat of N pixels on an
// h x w grid given explicitly): K1 bilateral, K2 spatial. K1 participates in
// the tape whenever the image does. Reusable spatial parts may be passed to
// avoid rebuilding exp tables per call.
std::vector<Tensor> build_kernels(const Tensor& image, Index h, Index w, const CrfParams& params,
                                  const Array* spatial_alpha = nullptr,
                                  const Array* spatial_gamma = nullptr);

// One Eq.-2 sweep: message passing, re-weighting, Potts compatibility,
// local update (paper or conventional form), normalization.
Tensor meanfield_step(const Tensor& q, const Tensor& unary, std::span<const Tensor> kernels,
                      std::span<const Tensor> weights, UpdateForm form);

// Q0 = softmax(-unary) columnwise, then `steps` mean-field sweeps.
Tensor crf_infer(const Tensor& unary, std::span<const Tensor> kernels,
                 std::span<const Tensor> weights, UpdateForm form, int steps);

// Brute-force marginals by enumerating all 2^N labelings of the Gibbs
// distribution; N <= 16. Never participates in any tape (oracle only).
Tensor exact_marginals(const Tensor& unary, std::span<const Tensor> kernels,
                       std::span<const Tensor> weights);

// Mean over pixels of -log Q(true label), floored at 1e-12.
Tensor crf_nll_loss(const Tensor& q, const LabelArray& labels);

}  // namespace masscrf

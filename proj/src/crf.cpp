#include "masscrf/crf.hpp"

#include <cmath>

namespace masscrf {

void CrfParams::validate() const {
  if (!(theta_alpha > 0.0 && theta_beta > 0.0 && theta_gamma > 0.0))
    throw BadParamError("crf bandwidths must be positive");
  if (t_train < 1 || t_test < 1) throw BadParamError("crf step counts must be >= 1");
}

std::vector<Tensor> init_kernel_weights(const CrfParams& params) {
  std::vector<Tensor> w;
  w.push_back(Tensor::scalar(params.w_init, true));
  w.push_back(Tensor::scalar(params.w_init, true));
  return w;
}

std::vector<Tensor> build_kernels(const Tensor& image, Index h, Index w, const CrfParams& params,
                                  const Array* spatial_alpha, const Array* spatial_gamma) {
  params.validate();
  const Index n = h * w;
  if (n > 4096)
    throw FieldTooLargeError("dense kernels limited to 4096 pixels, got " + std::to_string(n));
  if (image.size() != n)
    throw ShapeMismatchError("image pixel count does not match the stated grid");

  Array alpha_local, gamma_local;
  if (!spatial_alpha) {
    alpha_local = spatial_affinity(h, w, params.theta_alpha);
    spatial_alpha = &alpha_local;
  }
  if (!spatial_gamma) {
    gamma_local = spatial_affinity(h, w, params.theta_gamma);
    spatial_gamma = &gamma_local;
  }

  std::vector<Tensor> kernels;
  kernels.push_back(bilateral_kernel(image, *spatial_alpha, params.theta_beta));
  kernels.push_back(Tensor::from_array({n, n}, *spatial_gamma));
  return kernels;
}

Tensor meanfield_step(const Tensor& q, const Tensor& unary, std::span<const Tensor> kernels,
                      std::span<const Tensor> weights, UpdateForm form) {
  if (kernels.size() != weights.size())
    throw LengthMismatchError("meanfield_step needs one weight per kernel");
  if (q.order() != 2 || q.dim(0) != 2 || q.shape() != unary.shape())
    throw ShapeMismatchError("meanfield_step expects q and unary of shape [2,N]");

  std::vector<Tensor> messages;
  messages.reserve(kernels.size());
  for (const Tensor& k : kernels) messages.push_back(matmul(q, k));  // kernels are symmetric
  Tensor reweighted = linear_combination(weights, messages);
  Tensor compat = flip_labels(reweighted);
  Tensor local = form == UpdateForm::Paper ? sub(exp(neg(unary)), compat)
                                           : sub(neg(unary), compat);
  return softmax_labels(local);
}

Tensor crf_infer(const Tensor& unary, std::span<const Tensor> kernels,
                 std::span<const Tensor> weights, UpdateForm form, int steps) {
  if (steps < 1) throw BadParamError("crf_infer needs steps >= 1");
  Tensor q = softmax_labels(neg(unary));
  for (int t = 0; t < steps; ++t) q = meanfield_step(q, unary, kernels, weights, form);
  return q;
}

Tensor exact_marginals(const Tensor& unary, std::span<const Tensor> kernels,
                       std::span<const Tensor> weights) {
  if (unary.order() != 2 || unary.dim(0) != 2)
    throw ShapeMismatchError("exact_marginals expects unary [2,N]");
  const Index n = unary.dim(1);
  if (n > 16) throw FieldTooLargeError("exact enumeration limited to 16 pixels");
  if (kernels.size() != weights.size())
    throw LengthMismatchError("exact_marginals needs one weight per kernel");

  // Pairwise Potts costs: w-weighted kernel sum, charged when labels differ.
  MatrixRM pair = MatrixRM::Zero(n, n);
  for (std::size_t m = 0; m < kernels.size(); ++m) {
    if (kernels[m].size() != n * n)
      throw ShapeMismatchError("kernel matrix size does not match the unary field");
    pair += weights[m].scalar_value() *
            ConstMapRM(kernels[m].value().data(), n, n);
  }
  const Array& u = unary.value();

  const std::uint32_t count = 1u << n;
  std::vector<double> energy(count);
  double emin = std::numeric_limits<double>::infinity();
  for (std::uint32_t y = 0; y < count; ++y) {
    double e = 0.0;
    for (Index i = 0; i < n; ++i) {
      const Index li = (y >> i) & 1u;
      e += u[li * n + i];
      for (Index j = i + 1; j < n; ++j)
        if (li != ((y >> j) & 1u)) e += pair(i, j);
    }
    energy[y] = e;
    emin = std::min(emin, e);
  }

  Array marg = Array::Zero(2 * n);
  double z = 0.0;
  for (std::uint32_t y = 0; y < count; ++y) {
    const double p = std::exp(emin - energy[y]);
    z += p;
    for (Index i = 0; i < n; ++i) marg[((y >> i) & 1u) * n + i] += p;
  }
  marg /= z;
  return Tensor::from_array({2, n}, std::move(marg));
}

Tensor crf_nll_loss(const Tensor& q, const LabelArray& labels) {
  return nll_mean(q, labels);
}

}  // namespace masscrf

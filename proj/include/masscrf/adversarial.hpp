#pragma once

#include <functional>
#include <span>

#include "masscrf/ops.hpp"

namespace masscrf {

// L2-ball adversarial perturbation R = -eps * g / |g|_2.
struct Perturbation {
  Tensor r;
  double epsilon = 0.0;
  double source_grad_norm = 0.0;
};

// Differentiable map from one image (plus its labels) to the scalar
// log-likelihood log p(labels | image) under the current model.
using ModelEval = std::function<Tensor(const Tensor& image, const LabelArray& labels)>;

// Exact reverse-mode d(log-likelihood)/d(image). Runs under its own tape;
// model parameters accumulate no gradient.
Tensor input_gradient(const ModelEval& eval, const Tensor& image, const LabelArray& labels);

Perturbation make_perturbation(const Tensor& g, double epsilon);

// Eq.-3 adversarial loss: perturbations generated from the current model and
// then treated as constants; per-image losses are pixel-mean NLLs averaged
// over the batch. Degenerate-gradient samples contribute their unperturbed
// loss. Participates in the active tape through `eval`.
Tensor adversarial_loss(const ModelEval& eval, std::span<const Tensor> images,
                        std::span<const LabelArray> labels, double epsilon);

// Eq.-4 total objective: adversarial + empirical + (lambda/2)|theta_crf|^2,
// where the penalty covers exactly the given CRF-side scalars.
Tensor total_loss(const ModelEval& eval, std::span<const Tensor> images,
                  std::span<const LabelArray> labels, double epsilon, double lambda,
                  std::span<const Tensor> crf_side_params);

}  // namespace masscrf

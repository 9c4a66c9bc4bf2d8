#include "masscrf/adversarial.hpp"

#include <cmath>

namespace masscrf {

Tensor input_gradient(const ModelEval& eval, const Tensor& image, const LabelArray& labels) {
  // Probe leaf: isolates the differentiation target so the surrounding graph
  // and the model parameters stay gradient-free.
  Tensor probe = Tensor::from_array(image.shape(), image.value(), true);
  Tape tape;
  Tensor loglik = eval(probe, labels);
  if (loglik.size() != 1) throw NotScalarError("model_eval must return a scalar log-likelihood");
  std::vector<Array> grads = tape.gradients(loglik, std::span<const Tensor>(&probe, 1));
  check_finite(grads[0], "input_gradient");
  return Tensor::from_array(image.shape(), std::move(grads[0]));
}

Perturbation make_perturbation(const Tensor& g, double epsilon) {
  if (!(epsilon > 0.0)) throw BadParamError("make_perturbation: epsilon must be positive");
  const double norm = std::sqrt(g.value().square().sum());
  if (norm < 1e-12)
    throw DegenerateGradientError("gradient norm below 1e-12; skip the adversarial term");
  Perturbation p;
  p.r = Tensor::from_array(g.shape(), g.value() * (-epsilon / norm));
  p.epsilon = epsilon;
  p.source_grad_norm = norm;
  return p;
}

namespace {

// Pixel-mean NLL of one image under `eval`, matching the empirical loss
// normalization: -loglik / pixel_count.
Tensor sample_nll(const ModelEval& eval, const Tensor& image, const LabelArray& labels) {
  return scale(eval(image, labels), -1.0 / static_cast<double>(labels.size()));
}

}  // namespace

Tensor adversarial_loss(const ModelEval& eval, std::span<const Tensor> images,
                        std::span<const LabelArray> labels, double epsilon) {
  if (images.empty() || images.size() != labels.size())
    throw LengthMismatchError("adversarial_loss needs one label field per image");
  std::vector<Tensor> terms;
  terms.reserve(images.size());
  for (std::size_t n = 0; n < images.size(); ++n) {
    Tensor g = input_gradient(eval, images[n], labels[n]);
    Tensor perturbed = images[n].detached();
    try {
      Perturbation p = make_perturbation(g, epsilon);
      perturbed = Tensor::from_array(images[n].shape(), images[n].value() + p.r.value());
    } catch (const DegenerateGradientError&) {
      // saturated model: fall back to the unperturbed image
    }
    terms.push_back(sample_nll(eval, perturbed, labels[n]));
  }
  std::vector<double> coeffs(terms.size(), 1.0 / static_cast<double>(terms.size()));
  return weighted_sum(coeffs, terms);
}

Tensor total_loss(const ModelEval& eval, std::span<const Tensor> images,
                  std::span<const LabelArray> labels, double epsilon, double lambda,
                  std::span<const Tensor> crf_side_params) {
  if (lambda < 0.0) throw BadParamError("total_loss: lambda must be nonnegative");
  Tensor adv = adversarial_loss(eval, images, labels, epsilon);

  std::vector<Tensor> emp_terms;
  emp_terms.reserve(images.size());
  for (std::size_t n = 0; n < images.size(); ++n)
    emp_terms.push_back(sample_nll(eval, images[n], labels[n]));
  std::vector<double> coeffs(emp_terms.size(), 1.0 / static_cast<double>(emp_terms.size()));
  Tensor emp = weighted_sum(coeffs, emp_terms);

  Tensor loss = add(adv, emp);
  if (lambda > 0.0 && !crf_side_params.empty()) {
    std::vector<Tensor> squares;
    squares.reserve(crf_side_params.size());
    for (const Tensor& p : crf_side_params) squares.push_back(sum_squares(p));
    std::vector<double> half(squares.size(), lambda / 2.0);
    loss = add(loss, weighted_sum(half, squares));
  }
  return loss;
}

}  // namespace masscrf

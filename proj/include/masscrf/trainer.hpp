#pragma once

#include <string>
#include <vector>

#include "masscrf/checkpoint.hpp"
#include "masscrf/crf.hpp"
#include "masscrf/dataio.hpp"
#include "masscrf/fcn.hpp"
#include "masscrf/metrics.hpp"

namespace masscrf {

enum class Variant {
  fcn,
  fcn_adv,
  fcn_crf,
  fcn_crf_adv,
  multi_fcn,
  multi_fcn_adv,
  multi_fcn_crf,
  multi_fcn_crf_adv,
};

Variant variant_from_name(const std::string& name);
std::string variant_name(Variant v);
bool variant_has_adv(Variant v);
bool variant_has_crf(Variant v);
bool variant_is_multi(Variant v);

struct AdamHyper {
  double lr = 0.003, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

// Textbook Adam with bias correction; t is the 1-based step index after this
// update.
void adam_step(Array& param, const Array& grad, Array& m, Array& v, long long t,
               const AdamHyper& h);

struct TrainConfig {
  Variant variant = Variant::fcn;
  std::string fcn_row = "fcn1";  // single-FCN variants; multi uses fcn1..fcn4
  AdamHyper adam;
  int epochs = 30;
  int batch_size = 16;
  double epsilon = 0.1;
  double lambda = 0.5;
  std::uint64_t seed = 1;
  CrfParams crf;

  void validate() const;
};

// All trainable state for one variant.
struct ModelSet {
  Variant variant = Variant::fcn;
  std::vector<FcnModel> fcns;
  std::vector<Tensor> fusion_w;  // 4 scalars for multi variants
  std::vector<Tensor> kernel_w;  // 2 scalars for crf variants
  CrfParams crf;

  static ModelSet init(const TrainConfig& cfg, const Array& prior);
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  std::vector<Tensor> crf_side_parameters() const;  // penalty set
  std::vector<std::string> parameter_names() const;

  // Fused unary field [B,2,S,S] (single-FCN: the plain unary).
  Tensor fused_unary(const Tensor& images) const;
  // No-CRF probability head [B,2,S,S].
  Tensor probs_nocrf(const Tensor& images) const;
  // CRF marginals [2,N] of batch entry b; spatial parts are reusable
  // affinity tables for theta_alpha/theta_gamma.
  Tensor marginals_crf(const Tensor& images, Index b, int steps, const Array& sp_alpha,
                       const Array& sp_gamma) const;
};

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  double dice_train = 0.0;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochLog> log;
};

// Deterministic in cfg.seed. Resume continues bitwise-identically from a
// checkpoint produced by the same config.
TrainResult train(const PreparedData& data, const TrainConfig& cfg);
TrainResult train_resume(const Checkpoint& start, const PreparedData& data, int extra_epochs);

TrainConfig config_from_checkpoint(const Checkpoint& ck);
ModelSet models_from_checkpoint(const Checkpoint& ck);
NormStats stats_from_checkpoint(const Checkpoint& ck);

struct EvalResult {
  double mean_dice = 0.0;
  std::vector<double> per_sample_dice;
  std::vector<Mask> predictions;
  // Pooled over all test pixels per width, widths 1..5.
  std::vector<TrimapResult> trimap;
};

// Argmax decision rule with T_test mean-field steps where CRF is present.
EvalResult evaluate(const ModelSet& models, const PreparedData& test);

}  // namespace masscrf

#include "masscrf/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "masscrf/parallel.hpp"
#include "masscrf/rng.hpp"

namespace masscrf {

Variant variant_from_name(const std::string& name) {
  static const std::map<std::string, Variant> table = {
      {"fcn", Variant::fcn},
      {"fcn_adv", Variant::fcn_adv},
      {"fcn_crf", Variant::fcn_crf},
      {"fcn_crf_adv", Variant::fcn_crf_adv},
      {"multi_fcn", Variant::multi_fcn},
      {"multi_fcn_adv", Variant::multi_fcn_adv},
      {"multi_fcn_crf", Variant::multi_fcn_crf},
      {"multi_fcn_crf_adv", Variant::multi_fcn_crf_adv},
  };
  auto it = table.find(name);
  if (it == table.end()) {
    std::string all;
    for (const auto& [k, v] : table) all += (all.empty() ? "" : "|") + k;
    throw ConfigError("unknown variant '" + name + "' (expected " + all + ")");
  }
  return it->second;
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::fcn: return "fcn";
    case Variant::fcn_adv: return "fcn_adv";
    case Variant::fcn_crf: return "fcn_crf";
    case Variant::fcn_crf_adv: return "fcn_crf_adv";
    case Variant::multi_fcn: return "multi_fcn";
    case Variant::multi_fcn_adv: return "multi_fcn_adv";
    case Variant::multi_fcn_crf: return "multi_fcn_crf";
    case Variant::multi_fcn_crf_adv: return "multi_fcn_crf_adv";
  }
  return "fcn";
}

bool variant_has_adv(Variant v) {
  return v == Variant::fcn_adv || v == Variant::fcn_crf_adv || v == Variant::multi_fcn_adv ||
         v == Variant::multi_fcn_crf_adv;
}

bool variant_has_crf(Variant v) {
  return v == Variant::fcn_crf || v == Variant::fcn_crf_adv || v == Variant::multi_fcn_crf ||
         v == Variant::multi_fcn_crf_adv;
}

bool variant_is_multi(Variant v) {
  return v == Variant::multi_fcn || v == Variant::multi_fcn_adv ||
         v == Variant::multi_fcn_crf || v == Variant::multi_fcn_crf_adv;
}

void adam_step(Array& param, const Array& grad, Array& m, Array& v, long long t,
               const AdamHyper& h) {
  if (param.size() != grad.size() || param.size() != m.size() || param.size() != v.size())
    throw ShapeMismatchError("adam_step: buffer sizes disagree");
  m = h.beta1 * m + (1.0 - h.beta1) * grad;
  v = h.beta2 * v + (1.0 - h.beta2) * grad.square();
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(t));
  param -= h.lr * (m / c1) / ((v / c2).sqrt() + h.eps);
  check_finite(param, "adam_step");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw BadParamError("train: epochs must be >= 1");
  if (batch_size < 1) throw BadParamError("train: batch_size must be >= 1");
  if (!(adam.lr > 0.0)) throw BadParamError("train: learning rate must be positive");
  if (lambda < 0.0) throw BadParamError("train: lambda must be nonnegative");
  if (variant_has_adv(variant) && !(epsilon > 0.0))
    throw BadParamError("train: adversarial variants need epsilon > 0");
  crf.validate();
}

ModelSet ModelSet::init(const TrainConfig& cfg, const Array& prior) {
  ModelSet ms;
  ms.variant = cfg.variant;
  ms.crf = cfg.crf;
  const bool multi = variant_is_multi(cfg.variant);
  const std::vector<std::string> rows =
      multi ? std::vector<std::string>{"fcn1", "fcn2", "fcn3", "fcn4"}
            : std::vector<std::string>{cfg.fcn_row};
  for (std::size_t k = 0; k < rows.size(); ++k) {
    Rng rng(derive_seed(cfg.seed, 100 + static_cast<std::uint64_t>(k)));
    ms.fcns.push_back(FcnModel::init(FcnConfig::table_row(rows[k]), prior, rng));
  }
  if (multi)
    for (int k = 0; k < 4; ++k) ms.fusion_w.push_back(Tensor::scalar(0.25, true));
  if (variant_has_crf(cfg.variant)) ms.kernel_w = init_kernel_weights(cfg.crf);
  return ms;
}

std::vector<Tensor*> ModelSet::parameters() {
  std::vector<Tensor*> out;
  for (FcnModel& f : fcns)
    for (Tensor* p : f.parameters()) out.push_back(p);
  for (Tensor& w : fusion_w) out.push_back(&w);
  for (Tensor& w : kernel_w) out.push_back(&w);
  return out;
}

std::vector<const Tensor*> ModelSet::parameters() const {
  std::vector<const Tensor*> out;
  for (const FcnModel& f : fcns)
    for (const Tensor* p : f.parameters()) out.push_back(p);
  for (const Tensor& w : fusion_w) out.push_back(&w);
  for (const Tensor& w : kernel_w) out.push_back(&w);
  return out;
}

std::vector<Tensor> ModelSet::crf_side_parameters() const {
  std::vector<Tensor> out;
  for (const Tensor& w : kernel_w) out.push_back(w);
  for (const Tensor& w : fusion_w) out.push_back(w);
  return out;
}

std::vector<std::string> ModelSet::parameter_names() const {
  static const char* kFcnNames[] = {"k1", "b1", "k2", "b2", "k3", "b3", "kd", "prior_bias"};
  std::vector<std::string> out;
  for (std::size_t k = 0; k < fcns.size(); ++k)
    for (const char* n : kFcnNames) out.push_back("fcn" + std::to_string(k) + "." + n);
  for (std::size_t k = 0; k < fusion_w.size(); ++k)
    out.push_back("fusion.w" + std::to_string(k));
  for (std::size_t k = 0; k < kernel_w.size(); ++k) out.push_back("crf.w" + std::to_string(k));
  return out;
}

Tensor ModelSet::fused_unary(const Tensor& images) const {
  std::vector<Tensor> unaries;
  unaries.reserve(fcns.size());
  for (const FcnModel& f : fcns) unaries.push_back(unary_from_fcn(fcn_forward(f, images)));
  if (fcns.size() == 1) return unaries[0];
  return fuse_unaries(unaries, fusion_w);
}

Tensor ModelSet::probs_nocrf(const Tensor& images) const {
  if (fcns.size() == 1) return fcn_forward(fcns[0], images);
  return softmax_channels(neg(fused_unary(images)));
}

Tensor ModelSet::marginals_crf(const Tensor& images, Index b, int steps, const Array& sp_alpha,
                               const Array& sp_gamma) const {
  const Index S = fcns[0].config.image_size;
  Tensor fused = fused_unary(images);
  Tensor unary = slice_image(fused, b);
  Tensor image = slice_image(images, b);
  std::vector<Tensor> kernels = build_kernels(image, S, S, crf, &sp_alpha, &sp_gamma);
  return crf_infer(unary, kernels, kernel_w, crf.update_form, steps);
}

namespace {

constexpr Index S = kImageSize;
constexpr Index N = S * S;

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string serialize_config(const TrainConfig& cfg) {
  std::ostringstream os;
  os << "variant=" << variant_name(cfg.variant) << "\n";
  os << "fcn=" << cfg.fcn_row << "\n";
  os << "lr=" << fmt_double(cfg.adam.lr) << "\n";
  os << "adam_beta1=" << fmt_double(cfg.adam.beta1) << "\n";
  os << "adam_beta2=" << fmt_double(cfg.adam.beta2) << "\n";
  os << "adam_eps=" << fmt_double(cfg.adam.eps) << "\n";
  os << "epochs=" << cfg.epochs << "\n";
  os << "batch_size=" << cfg.batch_size << "\n";
  os << "epsilon=" << fmt_double(cfg.epsilon) << "\n";
  os << "lambda=" << fmt_double(cfg.lambda) << "\n";
  os << "seed=" << cfg.seed << "\n";
  os << "crf.theta_alpha=" << fmt_double(cfg.crf.theta_alpha) << "\n";
  os << "crf.theta_beta=" << fmt_double(cfg.crf.theta_beta) << "\n";
  os << "crf.theta_gamma=" << fmt_double(cfg.crf.theta_gamma) << "\n";
  os << "crf.t_train=" << cfg.crf.t_train << "\n";
  os << "crf.t_test=" << cfg.crf.t_test << "\n";
  os << "crf.update_form=" << (cfg.crf.update_form == UpdateForm::Paper ? "paper" : "conventional")
     << "\n";
  os << "crf.w_init=" << fmt_double(cfg.crf.w_init) << "\n";
  return os.str();
}

TrainConfig parse_config_text(const std::string& text) {
  TrainConfig cfg;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    if (key == "variant") cfg.variant = variant_from_name(val);
    else if (key == "fcn") cfg.fcn_row = val;
    else if (key == "lr") cfg.adam.lr = std::stod(val);
    else if (key == "adam_beta1") cfg.adam.beta1 = std::stod(val);
    else if (key == "adam_beta2") cfg.adam.beta2 = std::stod(val);
    else if (key == "adam_eps") cfg.adam.eps = std::stod(val);
    else if (key == "epochs") cfg.epochs = std::stoi(val);
    else if (key == "batch_size") cfg.batch_size = std::stoi(val);
    else if (key == "epsilon") cfg.epsilon = std::stod(val);
    else if (key == "lambda") cfg.lambda = std::stod(val);
    else if (key == "seed") cfg.seed = std::stoull(val);
    else if (key == "crf.theta_alpha") cfg.crf.theta_alpha = std::stod(val);
    else if (key == "crf.theta_beta") cfg.crf.theta_beta = std::stod(val);
    else if (key == "crf.theta_gamma") cfg.crf.theta_gamma = std::stod(val);
    else if (key == "crf.t_train") cfg.crf.t_train = std::stoi(val);
    else if (key == "crf.t_test") cfg.crf.t_test = std::stoi(val);
    else if (key == "crf.update_form")
      cfg.crf.update_form = val == "conventional" ? UpdateForm::Conventional : UpdateForm::Paper;
    else if (key == "crf.w_init") cfg.crf.w_init = std::stod(val);
  }
  return cfg;
}

Tensor cat_images(const PreparedData& data, const std::vector<Index>& idx) {
  Tensor out = Tensor::zeros({static_cast<Index>(idx.size()), 1, S, S});
  for (std::size_t k = 0; k < idx.size(); ++k)
    out.mutable_value().segment(static_cast<Index>(k) * N, N) =
        data.images[static_cast<std::size_t>(idx[k])].value();
  return out;
}

LabelArray cat_labels(const PreparedData& data, const std::vector<Index>& idx, int copies) {
  LabelArray out(static_cast<Index>(idx.size()) * copies * N);
  for (int c = 0; c < copies; ++c)
    for (std::size_t k = 0; k < idx.size(); ++k)
      out.segment((static_cast<Index>(c) * static_cast<Index>(idx.size()) +
                   static_cast<Index>(k)) *
                      N,
                  N) = data.labels[static_cast<std::size_t>(idx[k])];
  return out;
}

Mask argmax_mask(const double* p0, const double* p1) {
  Mask m{S, S, std::vector<std::uint8_t>(static_cast<std::size_t>(N))};
  for (Index i = 0; i < N; ++i) m.v[static_cast<std::size_t>(i)] = p1[i] > p0[i] ? 1 : 0;
  return m;
}

// Trainable state plus optimizer slots; shared by fresh and resumed runs.
struct TrainState {
  TrainConfig cfg;
  ModelSet models;
  std::vector<Array> adam_m, adam_v;
  long long adam_t = 0;
  int epoch = 0;
  Rng rng{0};
  NormStats stats;

  Array spatial_alpha, spatial_gamma;  // built lazily for crf variants

  void ensure_spatial() {
    if (!variant_has_crf(cfg.variant) || spatial_alpha.size() > 0) return;
    spatial_alpha = spatial_affinity(S, S, cfg.crf.theta_alpha);
    spatial_gamma = spatial_affinity(S, S, cfg.crf.theta_gamma);
  }
};

// Builds the data term over a batch (clean, or clean+perturbed stacked) and
// exposes the clean-half fields for train-Dice bookkeeping.
struct BatchLoss {
  Tensor loss_data;
  std::vector<Array> clean_fields;  // per clean sample: [2,N] probabilities
};

BatchLoss batch_data_loss(TrainState& st, const Tensor& images, const LabelArray& labels,
                          Index clean_count, bool doubled) {
  BatchLoss out;
  const Index M = images.dim(0);
  const double factor = doubled ? 2.0 : 1.0;
  if (!variant_has_crf(st.cfg.variant)) {
    Tensor probs = st.models.probs_nocrf(images);
    out.loss_data = scale(nll_mean(probs, labels), factor);
    for (Index b = 0; b < clean_count; ++b) {
      Array field(2 * N);
      field.head(N) = probs.value().segment((b * 2 + 0) * N, N);
      field.tail(N) = probs.value().segment((b * 2 + 1) * N, N);
      out.clean_fields.push_back(std::move(field));
    }
    return out;
  }

  st.ensure_spatial();
  Tensor fused = st.models.fused_unary(images);
  std::vector<Tensor> logliks;
  logliks.reserve(static_cast<std::size_t>(M));
  for (Index b = 0; b < M; ++b) {
    Tensor unary = slice_image(fused, b);
    Tensor image = slice_image(images, b);
    std::vector<Tensor> kernels =
        build_kernels(image, S, S, st.cfg.crf, &st.spatial_alpha, &st.spatial_gamma);
    Tensor q = crf_infer(unary, kernels, st.models.kernel_w, st.cfg.crf.update_form,
                         st.cfg.crf.t_train);
    if (b < clean_count) out.clean_fields.push_back(q.value());
    LabelArray lab(N);
    lab = labels.segment(b * N, N);
    logliks.push_back(log_likelihood_sum(q, lab));
  }
  std::vector<double> coeffs(logliks.size(),
                             -factor / static_cast<double>(M) / static_cast<double>(N));
  out.loss_data = weighted_sum(coeffs, logliks);
  return out;
}

// Log-likelihood of the whole batch under the current model, for the
// perturbation pass.
Tensor batch_loglik(TrainState& st, const Tensor& images, const LabelArray& labels) {
  if (!variant_has_crf(st.cfg.variant))
    return log_likelihood_sum(st.models.probs_nocrf(images), labels);
  st.ensure_spatial();
  const Index M = images.dim(0);
  Tensor fused = st.models.fused_unary(images);
  std::vector<Tensor> logliks;
  for (Index b = 0; b < M; ++b) {
    Tensor unary = slice_image(fused, b);
    Tensor image = slice_image(images, b);
    std::vector<Tensor> kernels =
        build_kernels(image, S, S, st.cfg.crf, &st.spatial_alpha, &st.spatial_gamma);
    Tensor q = crf_infer(unary, kernels, st.models.kernel_w, st.cfg.crf.update_form,
                         st.cfg.crf.t_train);
    LabelArray lab(N);
    lab = labels.segment(b * N, N);
    logliks.push_back(log_likelihood_sum(q, lab));
  }
  std::vector<double> ones(logliks.size(), 1.0);
  return weighted_sum(ones, logliks);
}

double run_batch(TrainState& st, const PreparedData& data, const std::vector<Index>& idx,
                 std::vector<double>& dice_acc) {
  const Index B = static_cast<Index>(idx.size());
  const bool adv = variant_has_adv(st.cfg.variant);
  Tensor clean = cat_images(data, idx);

  Tensor images = clean;
  LabelArray labels = cat_labels(data, idx, 1);
  if (adv) {
    // Perturbation pass: d(loglik)/d(images), rows normalized per sample.
    Array g;
    {
      Tensor leaf = Tensor::from_array(clean.shape(), clean.value(), true);
      Tape tape;
      Tensor loglik = batch_loglik(st, leaf, labels);
      g = std::move(tape.gradients(loglik, std::span<const Tensor>(&leaf, 1))[0]);
    }
    check_finite(g, "perturbation gradient");
    Array stacked(2 * B * N);
    stacked.head(B * N) = clean.value();
    for (Index b = 0; b < B; ++b) {
      const auto row = g.segment(b * N, N);
      const double norm = std::sqrt(row.square().sum());
      auto dst = stacked.segment((B + b) * N, N);
      dst = clean.value().segment(b * N, N);
      if (norm >= 1e-12) dst -= (st.cfg.epsilon / norm) * row;
      // degenerate gradient: the sample contributes its unperturbed loss
    }
    images = Tensor::from_array({2 * B, 1, S, S}, std::move(stacked));
    labels = cat_labels(data, idx, 2);
  }

  Tape tape;
  BatchLoss bl = batch_data_loss(st, images, labels, B, adv);
  Tensor loss = bl.loss_data;
  std::vector<Tensor> penalty_set = st.models.crf_side_parameters();
  if (st.cfg.lambda > 0.0 && !penalty_set.empty()) {
    std::vector<Tensor> squares;
    for (const Tensor& p : penalty_set) squares.push_back(sum_squares(p));
    std::vector<double> half(squares.size(), st.cfg.lambda / 2.0);
    loss = add(loss, weighted_sum(half, squares));
  }
  const double loss_value = loss.scalar_value();
  tape.backward(loss);

  std::vector<Tensor*> params = st.models.parameters();
  ++st.adam_t;
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k]->has_grad()) {
      adam_step(params[k]->mutable_value(), params[k]->grad(), st.adam_m[k], st.adam_v[k],
                st.adam_t, st.cfg.adam);
    } else {
      // Parameter off the graph this step: moments still decay.
      Array zero = Array::Zero(params[k]->size());
      adam_step(params[k]->mutable_value(), zero, st.adam_m[k], st.adam_v[k], st.adam_t,
                st.cfg.adam);
    }
    params[k]->zero_grad();
  }

  for (Index b = 0; b < B; ++b) {
    const Array& f = bl.clean_fields[static_cast<std::size_t>(b)];
    Mask pred = argmax_mask(f.data(), f.data() + N);
    dice_acc.push_back(dice(pred, data.masks[static_cast<std::size_t>(idx[b])]));
  }
  return loss_value;
}

void run_epochs(TrainState& st, const PreparedData& data, int n_epochs,
                std::vector<EpochLog>& log) {
  const Index n = static_cast<Index>(data.images.size());
  if (n == 0) throw EmptyDatasetError("train: empty dataset");
  for (int e = 0; e < n_epochs; ++e) {
    std::vector<Index> order(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    st.rng.shuffle(order);

    double loss_sum = 0.0;
    int batches = 0;
    std::vector<double> dice_acc;
    for (Index start = 0; start < n; start += st.cfg.batch_size) {
      const Index end = std::min(n, start + st.cfg.batch_size);
      std::vector<Index> idx(order.begin() + start, order.begin() + end);
      try {
        loss_sum += run_batch(st, data, idx, dice_acc);
      } catch (const NonFiniteError& err) {
        throw NonFiniteError("optimization step " + std::to_string(st.adam_t + 1) + ": " +
                             err.what());
      }
      ++batches;
    }
    double dice_mean = 0.0;
    for (double d : dice_acc) dice_mean += d;
    dice_mean /= static_cast<double>(dice_acc.size());
    ++st.epoch;
    log.push_back({st.epoch, loss_sum / batches, dice_mean});
  }
}

Checkpoint pack_checkpoint(TrainState& st) {
  Checkpoint ck;
  ck.blobs["config"] = serialize_config(st.cfg);
  std::ostringstream rs;
  rs << st.rng.engine();
  ck.blobs["rng"] = rs.str();
  const std::vector<std::string> names = st.models.parameter_names();
  std::vector<Tensor*> ps = st.models.parameters();
  for (std::size_t k = 0; k < ps.size(); ++k) {
    ck.put("param." + names[k], *ps[k]);
    ck.put("adam.m." + names[k], ps[k]->shape(), st.adam_m[k]);
    ck.put("adam.v." + names[k], ps[k]->shape(), st.adam_v[k]);
  }
  ck.put("adam.t", {1}, Array::Constant(1, static_cast<double>(st.adam_t)));
  ck.put("epoch", {1}, Array::Constant(1, static_cast<double>(st.epoch)));
  ck.put("preproc.mean", {S, S}, st.stats.mean);
  ck.put("preproc.std", {S, S}, st.stats.stddev);
  return ck;
}

TrainState unpack_checkpoint(const Checkpoint& ck) {
  TrainState st;
  auto blob = ck.blobs.find("config");
  if (blob == ck.blobs.end()) throw UnreadableFileError("checkpoint lacks config record");
  st.cfg = parse_config_text(blob->second);
  st.models = ModelSet::init(st.cfg, Array::Constant(N, 0.5));
  const std::vector<std::string> names = st.models.parameter_names();
  std::vector<Tensor*> ps = st.models.parameters();
  st.adam_m.resize(ps.size());
  st.adam_v.resize(ps.size());
  for (std::size_t k = 0; k < ps.size(); ++k) {
    const auto& rec = ck.record("param." + names[k]);
    if (rec.first != ps[k]->shape())
      throw VariantMismatchError("checkpoint parameter '" + names[k] +
                                 "' does not fit this variant");
    ps[k]->mutable_value() = rec.second;
    st.adam_m[k] = ck.record("adam.m." + names[k]).second;
    st.adam_v[k] = ck.record("adam.v." + names[k]).second;
  }
  st.adam_t = static_cast<long long>(ck.record("adam.t").second[0]);
  st.epoch = static_cast<int>(ck.record("epoch").second[0]);
  auto rng_blob = ck.blobs.find("rng");
  if (rng_blob == ck.blobs.end()) throw UnreadableFileError("checkpoint lacks rng record");
  std::istringstream rs(rng_blob->second);
  rs >> st.rng.engine();
  st.stats.h = S;
  st.stats.w = S;
  st.stats.mean = ck.record("preproc.mean").second;
  st.stats.stddev = ck.record("preproc.std").second;
  return st;
}

}  // namespace

TrainResult train(const PreparedData& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.images.empty()) throw EmptyDatasetError("train: empty dataset");

  Array prior = Array::Zero(N);
  for (const LabelArray& lab : data.labels)
    for (Index i = 0; i < N; ++i) prior[i] += lab[i];
  prior /= static_cast<double>(data.labels.size());

  TrainState st;
  st.cfg = cfg;
  st.models = ModelSet::init(cfg, prior);
  st.stats = data.stats;
  st.rng = Rng(derive_seed(cfg.seed, 0x7261696e));  // training-loop stream
  std::vector<Tensor*> ps = st.models.parameters();
  for (Tensor* p : ps) {
    st.adam_m.push_back(Array::Zero(p->size()));
    st.adam_v.push_back(Array::Zero(p->size()));
  }

  TrainResult result;
  run_epochs(st, data, cfg.epochs, result.log);
  result.checkpoint = pack_checkpoint(st);
  return result;
}

TrainResult train_resume(const Checkpoint& start, const PreparedData& data, int extra_epochs) {
  if (extra_epochs < 1) throw BadParamError("train_resume: extra_epochs must be >= 1");
  TrainState st = unpack_checkpoint(start);
  st.cfg.epochs += extra_epochs;
  TrainResult result;
  run_epochs(st, data, extra_epochs, result.log);
  result.checkpoint = pack_checkpoint(st);
  return result;
}

TrainConfig config_from_checkpoint(const Checkpoint& ck) {
  auto blob = ck.blobs.find("config");
  if (blob == ck.blobs.end()) throw UnreadableFileError("checkpoint lacks config record");
  return parse_config_text(blob->second);
}

ModelSet models_from_checkpoint(const Checkpoint& ck) {
  return unpack_checkpoint(ck).models;
}

NormStats stats_from_checkpoint(const Checkpoint& ck) {
  NormStats stats;
  stats.h = S;
  stats.w = S;
  stats.mean = ck.record("preproc.mean").second;
  stats.stddev = ck.record("preproc.std").second;
  return stats;
}

EvalResult evaluate(const ModelSet& models, const PreparedData& test) {
  if (test.images.empty()) throw EmptyDatasetError("evaluate: empty dataset");
  const Index n = static_cast<Index>(test.images.size());
  const bool with_crf = variant_has_crf(models.variant);

  Array sp_alpha, sp_gamma;
  if (with_crf) {
    sp_alpha = spatial_affinity(S, S, models.crf.theta_alpha);
    sp_gamma = spatial_affinity(S, S, models.crf.theta_gamma);
  }

  EvalResult out;
  out.predictions.resize(static_cast<std::size_t>(n));
  out.per_sample_dice.resize(static_cast<std::size_t>(n));

  parallel_for(n, [&](Index i) {
    const Tensor& img = test.images[static_cast<std::size_t>(i)];
    Array field(2 * N);
    if (with_crf) {
      Tensor q = models.marginals_crf(img, 0, models.crf.t_test, sp_alpha, sp_gamma);
      field = q.value();
    } else {
      Tensor probs = models.probs_nocrf(img);
      field.head(N) = probs.value().head(N);
      field.tail(N) = probs.value().tail(N);
    }
    Mask pred = argmax_mask(field.data(), field.data() + N);
    out.per_sample_dice[static_cast<std::size_t>(i)] =
        dice(pred, test.masks[static_cast<std::size_t>(i)]);
    out.predictions[static_cast<std::size_t>(i)] = std::move(pred);
  });

  double sum = 0.0;
  for (double d : out.per_sample_dice) sum += d;
  out.mean_dice = sum / static_cast<double>(n);

  for (int width = 1; width <= 5; ++width) {
    TrimapResult pooled;
    for (Index i = 0; i < n; ++i) {
      TrimapResult r = trimap_accuracy(out.predictions[static_cast<std::size_t>(i)],
                                       test.masks[static_cast<std::size_t>(i)], width);
      pooled.band_pixels += r.band_pixels;
      pooled.band_correct += r.band_correct;
    }
    if (pooled.band_pixels == 0) {
      pooled.empty_band = true;
      pooled.accuracy = 1.0;
    } else {
      pooled.accuracy =
          static_cast<double>(pooled.band_correct) / static_cast<double>(pooled.band_pixels);
    }
    out.trimap.push_back(pooled);
  }
  return out;
}

}  // namespace masscrf

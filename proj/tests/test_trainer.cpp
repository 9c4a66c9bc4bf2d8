#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>

#include "helpers.hpp"
#include "masscrf/trainer.hpp"

using namespace masscrf;
using testsup::TempDir;

namespace {

std::string ck_bytes(const Checkpoint& ck) {
  TempDir td("ckbytes");
  ck.save(td.str("x.ckpt"));
  std::ifstream f(td.str("x.ckpt"), std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

PreparedData tiny_data(int count, std::uint64_t seed, double contrast = 0.6,
                       double noise = 0.05) {
  Dataset ds = synth_generate(count, seed, contrast, noise);
  return prepare(ds, nullptr, false);
}

TrainConfig smoke_config(Variant v) {
  TrainConfig cfg;
  cfg.variant = v;
  cfg.adam.lr = 0.01;
  cfg.batch_size = 4;
  cfg.lambda = 0.0;
  cfg.epsilon = 0.01;
  cfg.seed = 1;
  cfg.crf.w_init = 0.01;
  return cfg;
}

// ModelSet whose forward is exactly its (frozen) prior decision: zero the
// conv stack, keep the prior bias from init.
ModelSet prior_only_models(const Array& prior) {
  TrainConfig cfg;
  cfg.variant = Variant::fcn;
  ModelSet ms = ModelSet::init(cfg, prior);
  auto ps = ms.fcns[0].parameters();
  for (std::size_t k = 0; k + 1 < ps.size(); ++k) ps[k]->mutable_value().setZero();
  return ms;
}

PreparedData one_sample_test(const Mask& mask) {
  PreparedData td;
  td.images.push_back(Tensor::zeros({1, 1, 40, 40}));
  LabelArray lab(1600);
  for (Index i = 0; i < 1600; ++i) lab[i] = mask.v[static_cast<std::size_t>(i)];
  td.labels.push_back(lab);
  td.masks.push_back(mask);
  td.ids.push_back("t0");
  return td;
}

}  // namespace

TEST_CASE("variant names round trip and classify correctly") {
  const char* names[] = {"fcn",       "fcn_adv",       "fcn_crf",       "fcn_crf_adv",
                         "multi_fcn", "multi_fcn_adv", "multi_fcn_crf", "multi_fcn_crf_adv"};
  for (const char* n : names) {
    Variant v = variant_from_name(n);
    CHECK(variant_name(v) == n);
    CHECK(variant_has_adv(v) == (std::string(n).find("adv") != std::string::npos));
    CHECK(variant_has_crf(v) == (std::string(n).find("crf") != std::string::npos));
    CHECK(variant_is_multi(v) == (std::string(n).rfind("multi", 0) == 0));
  }
  CHECK_THROWS_WITH_AS((void)variant_from_name("fcn_rnn"), doctest::Contains("fcn_crf_adv"),
                       ConfigError);
}

TEST_CASE("adam leaves parameters alone under zero gradient from rest") {
  AdamHyper h;
  Array p = Array::Constant(3, 1.5), g = Array::Zero(3);
  Array m = Array::Zero(3), v = Array::Zero(3);
  for (long long t = 1; t <= 3; ++t) adam_step(p, g, m, v, t, h);
  CHECK((p == 1.5).all());
  CHECK((m == 0.0).all());
  CHECK((v == 0.0).all());
}

TEST_CASE("adam decays stale moments geometrically on a zero-gradient step") {
  AdamHyper h;
  Array p = Array::Constant(1, 1.0), g = Array::Zero(1);
  Array m = Array::Constant(1, 0.2), v = Array::Constant(1, 0.04);
  adam_step(p, g, m, v, 10, h);
  CHECK(m[0] == doctest::Approx(0.9 * 0.2).epsilon(1e-15));
  CHECK(v[0] == doctest::Approx(0.999 * 0.04).epsilon(1e-15));
  CHECK(p[0] != 1.0);  // nonzero moment still moves the parameter
}

TEST_CASE("adam update magnitude approaches the learning rate") {
  AdamHyper h;  // lr = 0.003
  Array p = Array::Zero(1), g = Array::Constant(1, 0.37);
  Array m = Array::Zero(1), v = Array::Zero(1);
  double prev = p[0];
  double step_mag = 0.0;
  for (long long t = 1; t <= 500; ++t) {
    adam_step(p, g, m, v, t, h);
    step_mag = std::abs(p[0] - prev);
    prev = p[0];
  }
  CHECK(step_mag == doctest::Approx(h.lr).epsilon(0.01));
}

TEST_CASE("adam matches the hand-computed 3-step trace") {
  AdamHyper h;
  h.lr = 0.1;
  Array p = Array::Constant(1, 0.5);
  Array m = Array::Zero(1), v = Array::Zero(1);
  const double grads[] = {1.0, -0.5, 2.0};
  const double want_p[] = {0.400000001, 0.37336629737090316, 0.3075551378428032};
  const double want_m[] = {0.1, 0.04, 0.236};
  for (long long t = 1; t <= 3; ++t) {
    Array g = Array::Constant(1, grads[t - 1]);
    adam_step(p, g, m, v, t, h);
    CHECK(p[0] == doctest::Approx(want_p[t - 1]).epsilon(1e-12));
    CHECK(m[0] == doctest::Approx(want_m[t - 1]).epsilon(1e-12));
  }
}

TEST_CASE("adam validates buffer sizes") {
  AdamHyper h;
  Array p = Array::Zero(2), g = Array::Zero(3), m = Array::Zero(2), v = Array::Zero(2);
  CHECK_THROWS_AS(adam_step(p, g, m, v, 1, h), ShapeMismatchError);
}

TEST_CASE("config validation") {
  TrainConfig cfg;
  cfg.epochs = 0;
  CHECK_THROWS_AS(cfg.validate(), BadParamError);
  cfg = TrainConfig{};
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), BadParamError);
  cfg = TrainConfig{};
  cfg.variant = Variant::fcn_adv;
  cfg.epsilon = 0.0;
  CHECK_THROWS_AS(cfg.validate(), BadParamError);
  cfg = TrainConfig{};
  cfg.lambda = -1.0;
  CHECK_THROWS_AS(cfg.validate(), BadParamError);
}

TEST_CASE("model set composition per variant") {
  Array prior = Array::Constant(1600, 0.5);
  TrainConfig cfg;
  cfg.variant = Variant::fcn;
  ModelSet plain = ModelSet::init(cfg, prior);
  CHECK(plain.fcns.size() == 1);
  CHECK(plain.fusion_w.empty());
  CHECK(plain.kernel_w.empty());
  CHECK(plain.parameters().size() == 8);
  CHECK(plain.crf_side_parameters().empty());

  cfg.variant = Variant::multi_fcn_crf_adv;
  ModelSet full = ModelSet::init(cfg, prior);
  CHECK(full.fcns.size() == 4);
  CHECK(full.fusion_w.size() == 4);
  CHECK(full.kernel_w.size() == 2);
  CHECK(full.parameters().size() == 4 * 8 + 4 + 2);
  CHECK(full.crf_side_parameters().size() == 6);  // kernel + fusion weights
  for (const Tensor& w : full.fusion_w) CHECK(w.scalar_value() == 0.25);

  auto names = full.parameter_names();
  REQUIRE(names.size() == 38);
  CHECK(names[0] == "fcn0.k1");
  CHECK(names[8] == "fcn1.k1");
  CHECK(names[32] == "fusion.w0");
  CHECK(names[36] == "crf.w0");
}

TEST_CASE("same seed trains to bitwise-identical checkpoints") {
  PreparedData data = tiny_data(8, 21);
  TrainConfig cfg = smoke_config(Variant::fcn);
  cfg.epochs = 2;
  TrainResult a = train(data, cfg);
  TrainResult b = train(data, cfg);
  CHECK(ck_bytes(a.checkpoint) == ck_bytes(b.checkpoint));
  REQUIRE(a.log.size() == 2);
  CHECK(a.log[0].epoch == 1);
  CHECK(a.log[1].epoch == 2);
  for (const EpochLog& l : a.log) {
    CHECK(std::isfinite(l.loss));
    CHECK(l.dice_train >= 0.0);
    CHECK(l.dice_train <= 1.0);
  }

  TrainConfig other = cfg;
  other.seed = 2;
  CHECK(ck_bytes(train(data, other).checkpoint) != ck_bytes(a.checkpoint));
}

TEST_CASE("a resumed run is bitwise identical to an unbroken one") {
  PreparedData data = tiny_data(8, 23);
  TrainConfig cfg = smoke_config(Variant::fcn_crf);
  cfg.epochs = 2;
  TrainResult whole = train(data, cfg);

  TrainConfig half = cfg;
  half.epochs = 1;
  TrainResult first = train(data, half);

  // route the checkpoint through disk, as a real resume would
  TempDir td("resume");
  first.checkpoint.save(td.str("half.ckpt"));
  Checkpoint loaded = Checkpoint::load(td.str("half.ckpt"));
  TrainResult second = train_resume(loaded, data, 1);

  CHECK(ck_bytes(whole.checkpoint) == ck_bytes(second.checkpoint));
  REQUIRE(second.log.size() == 1);
  CHECK(second.log[0].epoch == 2);  // epoch numbering continues
  CHECK(second.log[0].loss == whole.log[1].loss);

  CHECK_THROWS_AS((void)train_resume(loaded, data, 0), BadParamError);
}

TEST_CASE("checkpoint carries the config and stats verbatim") {
  PreparedData data = tiny_data(4, 27);
  TrainConfig cfg = smoke_config(Variant::fcn_crf_adv);
  cfg.epochs = 1;
  cfg.crf.t_train = 2;
  TrainResult r = train(data, cfg);

  TrainConfig back = config_from_checkpoint(r.checkpoint);
  CHECK(back.variant == Variant::fcn_crf_adv);
  CHECK(back.adam.lr == cfg.adam.lr);
  CHECK(back.epochs == 1);
  CHECK(back.epsilon == cfg.epsilon);
  CHECK(back.seed == cfg.seed);
  CHECK(back.crf.t_train == 2);
  CHECK(back.crf.w_init == cfg.crf.w_init);

  NormStats stats = stats_from_checkpoint(r.checkpoint);
  CHECK(stats.mean.size() == 1600);
  CHECK((stats.mean == data.stats.mean).all());
  CHECK((stats.stddev == data.stats.stddev).all());

  ModelSet ms = models_from_checkpoint(r.checkpoint);
  CHECK(ms.variant == Variant::fcn_crf_adv);
  CHECK(ms.kernel_w.size() == 2);

  // a checkpoint whose config names a different row no longer fits
  Checkpoint bad = r.checkpoint;
  std::string cfg_text = bad.blobs["config"];
  const auto at = cfg_text.find("fcn=fcn1");
  REQUIRE(at != std::string::npos);
  cfg_text.replace(at, 8, "fcn=fcn3");
  bad.blobs["config"] = cfg_text;
  CHECK_THROWS_AS((void)models_from_checkpoint(bad), VariantMismatchError);
}

TEST_CASE("kernel weights receive gradient on the first step") {
  PreparedData data = tiny_data(4, 29);
  TrainConfig cfg = smoke_config(Variant::fcn_crf);
  cfg.epochs = 1;
  TrainResult r = train(data, cfg);
  const Array& w0 = r.checkpoint.record("param.crf.w0").second;
  const Array& w1 = r.checkpoint.record("param.crf.w1").second;
  CHECK(w0[0] != cfg.crf.w_init);
  CHECK(w1[0] != cfg.crf.w_init);
  CHECK(r.checkpoint.record("adam.m.crf.w0").second[0] != 0.0);
}

TEST_CASE("lambda moves only CRF-side parameters on the first step") {
  // one step only: afterwards the diverged kernel weights feed back into the
  // FCN gradients through the CRF unrolling
  PreparedData data = tiny_data(4, 31);
  TrainConfig none = smoke_config(Variant::fcn_crf);
  none.epochs = 1;
  none.lambda = 0.0;
  TrainConfig reg = none;
  reg.lambda = 0.5;

  TrainResult a = train(data, none);
  TrainResult b = train(data, reg);
  for (const char* name : {"param.fcn0.k1", "param.fcn0.b1", "param.fcn0.k2", "param.fcn0.b2",
                           "param.fcn0.k3", "param.fcn0.b3", "param.fcn0.kd",
                           "param.fcn0.prior_bias"}) {
    const Array& pa = a.checkpoint.record(name).second;
    const Array& pb = b.checkpoint.record(name).second;
    CHECK((pa == pb).all());
  }
  // the penalty gradient lambda*w lands in the kernel weights' moments
  CHECK(a.checkpoint.record("adam.m.crf.w0").second[0] !=
        b.checkpoint.record("adam.m.crf.w0").second[0]);
  CHECK(a.checkpoint.record("param.crf.w0").second[0] !=
        b.checkpoint.record("param.crf.w0").second[0]);
}

// Fitting a single batch to high overlap proves the whole variant path
// trains: forward, objective, backward, Adam, logging. The plain-FCN loss
// floor sits near 0.32 (soft boundaries at the deconv resolution), so the
// bar is Dice-led rather than a near-zero loss.
TEST_CASE("every variant fits a 4-sample batch end to end") {
  PreparedData data = tiny_data(4, 11);
  for (Variant v :
       {Variant::fcn, Variant::fcn_adv, Variant::fcn_crf, Variant::fcn_crf_adv, Variant::multi_fcn,
        Variant::multi_fcn_adv, Variant::multi_fcn_crf, Variant::multi_fcn_crf_adv}) {
    TrainConfig cfg = smoke_config(v);
    cfg.epochs = 25;
    TrainResult r = train(data, cfg);
    int steps = 25;
    auto done = [&] { return r.log.back().dice_train >= 0.85 && r.log.back().loss <= 0.5; };
    while (!done() && steps < 200) {
      r = train_resume(r.checkpoint, data, 25);
      steps += 25;
    }
    for (const EpochLog& l : r.log) CHECK(std::isfinite(l.loss));
    INFO(variant_name(v), ": loss ", r.log.back().loss, ", dice ", r.log.back().dice_train,
         " after ", steps, " steps");
    CHECK(r.log.back().dice_train >= 0.85);
    CHECK(r.log.back().loss <= 0.5);
  }
}

TEST_CASE("training reports non-finite losses with the step index") {
  PreparedData data = tiny_data(4, 33);
  TrainConfig cfg = smoke_config(Variant::fcn);
  cfg.epochs = 3;
  cfg.adam.lr = 1e308;
  CHECK_THROWS_WITH_AS((void)train(data, cfg), doctest::Contains("optimization step"),
                       NonFiniteError);
}

TEST_CASE("train rejects an empty dataset") {
  PreparedData none;
  TrainConfig cfg = smoke_config(Variant::fcn);
  cfg.epochs = 1;
  CHECK_THROWS_AS((void)train(none, cfg), EmptyDatasetError);
}

TEST_CASE("evaluate scores a perfect predictor at dice 1") {
  Dataset ds = synth_generate(1, 35, 0.6, 0.05);
  Mask mask = ds.samples[0].mask;
  Array prior(1600);
  for (Index i = 0; i < 1600; ++i) prior[i] = mask.v[static_cast<std::size_t>(i)] ? 1.0 : 0.0;

  EvalResult r = evaluate(prior_only_models(prior), one_sample_test(mask));
  CHECK(r.mean_dice == 1.0);
  REQUIRE(r.per_sample_dice.size() == 1);
  CHECK(r.per_sample_dice[0] == 1.0);
  REQUIRE(r.predictions.size() == 1);
  CHECK(r.predictions[0].v == mask.v);
  REQUIRE(r.trimap.size() == 5);
  for (const TrimapResult& t : r.trimap) {
    CHECK_FALSE(t.empty_band);
    CHECK(t.accuracy == 1.0);
  }
}

TEST_CASE("evaluate scores an all-background predictor at dice 0") {
  Dataset ds = synth_generate(1, 37, 0.6, 0.05);
  EvalResult r = evaluate(prior_only_models(Array::Zero(1600)), one_sample_test(ds.samples[0].mask));
  CHECK(r.mean_dice == 0.0);

  PreparedData none;
  CHECK_THROWS_AS((void)evaluate(prior_only_models(Array::Zero(1600)), none), EmptyDatasetError);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>

#include "helpers.hpp"
#include "masscrf/config.hpp"

using namespace masscrf;
using testsup::TempDir;

TEST_CASE("defaults") {
  RunConfig c;
  CHECK(c.seed == 1);
  CHECK(c.out_dir == "out");
  CHECK(c.data_dir.empty());
  CHECK(c.augment);
  CHECK(c.synth_count == 400);
  CHECK(c.synth_split == "train");
  CHECK(c.synth_contrast == 0.25);
  CHECK(c.synth_noise == 0.15);
  CHECK(c.train.variant == Variant::fcn);
  CHECK(c.train.fcn_row == "fcn1");
  CHECK(c.train.adam.lr == 0.003);
  CHECK(c.train.adam.beta1 == 0.9);
  CHECK(c.train.adam.beta2 == 0.999);
  CHECK(c.train.adam.eps == 1e-8);
  CHECK(c.train.epochs == 30);
  CHECK(c.train.batch_size == 16);
  CHECK(c.train.epsilon == 0.1);
  CHECK(c.train.lambda == 0.5);
  CHECK(c.train.seed == 1);
  CHECK(c.train.crf.theta_alpha == 3.0);
  CHECK(c.train.crf.theta_beta == 0.1);
  CHECK(c.train.crf.theta_gamma == 3.0);
  CHECK(c.train.crf.t_train == 5);
  CHECK(c.train.crf.t_test == 10);
  CHECK(c.train.crf.update_form == UpdateForm::Paper);
  CHECK(c.train.crf.w_init == 1.0);
  CHECK(c.resume.empty());
  CHECK(c.checkpoint.empty());
  CHECK_FALSE(c.contours);
}

TEST_CASE("set applies every documented key") {
  RunConfig c;
  c.set("seed", "77");
  CHECK(c.seed == 77);
  CHECK(c.train.seed == 77);  // one seed governs the whole run
  c.set("out", "runs/x");
  CHECK(c.out_dir == "runs/x");
  c.set("data.dir", "ds");
  c.set("data.augment", "no");
  CHECK_FALSE(c.augment);
  c.set("data.augment", "1");
  CHECK(c.augment);
  c.set("synth.count", "12");
  CHECK(c.synth_count == 12);
  c.set("synth.split", "test");
  c.set("synth.contrast", "0.5");
  c.set("synth.noise", "0.05");
  c.set("train.variant", "fcn_crf_adv");
  CHECK(c.train.variant == Variant::fcn_crf_adv);
  c.set("train.fcn", "fcn3");
  c.set("train.lr", "1e-2");
  CHECK(c.train.adam.lr == 0.01);
  c.set("train.beta1", "0.8");
  c.set("train.beta2", "0.99");
  c.set("train.adam_eps", "1e-7");
  c.set("train.epochs", "3");
  c.set("train.batch_size", "4");
  c.set("train.epsilon", "0.5");
  c.set("train.lambda", "0.25");
  c.set("train.resume", "ck.bin");
  CHECK(c.resume == "ck.bin");
  c.set("crf.theta_alpha", "2");
  c.set("crf.theta_beta", "0.2");
  c.set("crf.theta_gamma", "4");
  c.set("crf.t_train", "3");
  c.set("crf.t_test", "7");
  c.set("crf.update_form", "conventional");
  CHECK(c.train.crf.update_form == UpdateForm::Conventional);
  c.set("crf.update_form", "paper");
  c.set("crf.w_init", "0.01");
  CHECK(c.train.crf.w_init == 0.01);
  c.set("eval.checkpoint", "model.ckpt");
  CHECK(c.checkpoint == "model.ckpt");
  c.set("eval.contours", "true");
  CHECK(c.contours);
}

TEST_CASE("unknown keys and bad values are rejected with context") {
  RunConfig c;
  CHECK_THROWS_WITH_AS(c.set("train.momentum", "0.9"), doctest::Contains("train.momentum"),
                       ConfigError);
  CHECK_THROWS_WITH_AS(c.set("train.lr", "fast"), doctest::Contains("train.lr"), ConfigError);
  CHECK_THROWS_AS(c.set("train.epochs", "3.5"), ConfigError);
  CHECK_THROWS_AS(c.set("data.augment", "maybe"), ConfigError);
  CHECK_THROWS_AS(c.set("synth.split", "validation"), ConfigError);
  CHECK_THROWS_AS(c.set("crf.update_form", "printed"), ConfigError);
  CHECK_THROWS_WITH_AS(c.set("train.variant", "bogus"), doctest::Contains("multi_fcn_crf_adv"),
                       ConfigError);
}

TEST_CASE("file parsing with comments and blank lines") {
  TempDir td("cfg");
  {
    std::ofstream f(td.str("run.cfg"));
    f << "# full run\n"
      << "\n"
      << "seed = 9\n"
      << "  train.lr=0.001   # tighter\n"
      << "train.variant = fcn_crf\n"
      << "crf.w_init = 0.01\n";
  }
  RunConfig c;
  c.load_file(td.str("run.cfg"));
  CHECK(c.seed == 9);
  CHECK(c.train.adam.lr == 0.001);
  CHECK(c.train.variant == Variant::fcn_crf);
  CHECK(c.train.crf.w_init == 0.01);

  CHECK_THROWS_AS(c.load_file(td.str("absent.cfg")), IoError);

  {
    std::ofstream f(td.str("bad.cfg"));
    f << "seed = 1\n"
      << "this line has no equals\n";
  }
  CHECK_THROWS_WITH_AS(c.load_file(td.str("bad.cfg")), doctest::Contains("line 2"), ConfigError);
}

TEST_CASE("resolved output is a fixpoint of the parser") {
  RunConfig c;
  c.set("seed", "5");
  c.set("train.variant", "multi_fcn_adv");
  c.set("train.lambda", "0.125");
  c.set("crf.update_form", "conventional");
  c.set("eval.contours", "yes");
  const std::string text = c.resolved();
  CHECK(text.find("train.lambda = 0.125\n") != std::string::npos);
  CHECK(text.find("train.variant = multi_fcn_adv\n") != std::string::npos);

  TempDir td("cfg");
  {
    std::ofstream f(td.str("echo.cfg"));
    f << text;
  }
  RunConfig back;
  back.load_file(td.str("echo.cfg"));
  CHECK(back.resolved() == text);
}

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "masscrf/checkpoint.hpp"
#include "masscrf/config.hpp"
#include "masscrf/dataio.hpp"
#include "masscrf/gradcheck.hpp"
#include "masscrf/image_io.hpp"
#include "masscrf/trainer.hpp"

namespace fs = std::filesystem;
using namespace masscrf;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
}

void write_resolved(const RunConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  write_text(fs::path(cfg.out_dir) / "config_resolved.txt", cfg.resolved());
}

int cmd_synth(const RunConfig& cfg) {
  Dataset ds = synth_generate(cfg.synth_count, cfg.seed, cfg.synth_contrast, cfg.synth_noise);
  ds.split = cfg.synth_split == "test" ? Split::test : Split::train;
  fs::create_directories(cfg.out_dir);
  write_dataset(cfg.out_dir, ds);
  write_resolved(cfg);
  std::cout << "wrote " << ds.samples.size() << " " << cfg.synth_split << " pairs to "
            << cfg.out_dir << "\n";
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  if (cfg.data_dir.empty()) throw ConfigError("train requires data.dir (--data)");
  Dataset ds = load_masks_dir(cfg.data_dir, Split::train);
  PreparedData prepared = prepare(ds, nullptr, cfg.augment);

  TrainResult result;
  if (!cfg.resume.empty()) {
    Checkpoint start = Checkpoint::load(cfg.resume);
    result = train_resume(start, prepared, cfg.train.epochs);
  } else {
    result = train(prepared, cfg.train);
  }

  fs::create_directories(cfg.out_dir);
  result.checkpoint.save((fs::path(cfg.out_dir) / "checkpoint.bin").string());

  std::ostringstream csv;
  csv << "epoch,loss,dice_train\n";
  for (const EpochLog& row : result.log) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%d,%.12g,%.12g\n", row.epoch, row.loss, row.dice_train);
    csv << buf;
  }
  write_text(fs::path(cfg.out_dir) / "metrics.csv", csv.str());
  write_resolved(cfg);

  const EpochLog& last = result.log.back();
  std::cout << "trained " << variant_name(cfg.resume.empty()
                                              ? cfg.train.variant
                                              : config_from_checkpoint(result.checkpoint).variant)
            << " for " << result.log.size() << " epochs; final loss " << last.loss
            << ", train Dice " << last.dice_train << "\n";
  return 0;
}

int cmd_eval(const RunConfig& cfg) {
  if (cfg.checkpoint.empty()) throw ConfigError("eval requires eval.checkpoint (--checkpoint)");
  if (cfg.data_dir.empty()) throw ConfigError("eval requires data.dir (--data)");
  Checkpoint ck = Checkpoint::load(cfg.checkpoint);
  ModelSet models = models_from_checkpoint(ck);
  NormStats stats = stats_from_checkpoint(ck);

  Dataset ds = load_masks_dir(cfg.data_dir, Split::test);
  PreparedData prepared = prepare(ds, &stats, false);
  EvalResult res = evaluate(models, prepared);

  fs::create_directories(cfg.out_dir);
  {
    std::ostringstream os;
    os << "samples " << prepared.images.size() << "\n";
    char buf[64];
    std::snprintf(buf, sizeof buf, "mean_dice %.12g\n", res.mean_dice);
    os << buf;
    write_text(fs::path(cfg.out_dir) / "dice_summary.txt", os.str());
  }
  {
    std::ostringstream os;
    os << "sample_id,dice\n";
    for (std::size_t i = 0; i < prepared.ids.size(); ++i) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "%s,%.12g\n", prepared.ids[i].c_str(),
                    res.per_sample_dice[i]);
      os << buf;
    }
    write_text(fs::path(cfg.out_dir) / "per_sample_dice.csv", os.str());
  }
  {
    std::ostringstream os;
    os << "width,accuracy\n";
    for (std::size_t k = 0; k < res.trimap.size(); ++k) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%zu,%.12g\n", k + 1, res.trimap[k].accuracy);
      os << buf;
    }
    write_text(fs::path(cfg.out_dir) / "trimap.csv", os.str());
  }
  if (cfg.contours) {
    for (std::size_t i = 0; i < prepared.ids.size(); ++i) {
      const Array& z = prepared.images[i].value();
      const double lo = z.minCoeff(), hi = z.maxCoeff();
      Array base = hi > lo ? Array(((z - lo) / (hi - lo)).eval()) : Array(Array::Zero(z.size()));
      write_contour_png(
          (fs::path(cfg.out_dir) / ("contour_" + prepared.ids[i] + ".png")).string(), base,
          prepared.masks[i], res.predictions[i]);
    }
  }
  write_resolved(cfg);
  std::cout << "mean Dice over " << prepared.images.size() << " samples: " << res.mean_dice
            << "\n";
  return 0;
}

int cmd_gradcheck(const RunConfig& cfg, const std::string& op_filter) {
  std::vector<CheckReport> reports = run_gradcheck(cfg.seed, op_filter);
  if (reports.empty()) {
    std::cout << "no checks match filter '" << op_filter << "'\n";
    return 2;
  }
  std::printf("%-32s %12s %10s  %s\n", "check", "max_rel_err", "tol", "status");
  for (const CheckReport& r : reports)
    std::printf("%-32s %12.3e %10.0e  %s\n", r.name.c_str(), r.max_rel_err, r.tolerance,
                r.pass ? "PASS" : "FAIL");
  return all_passed(reports) ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adversarially trained FCN-CRF mass segmentation"};
  app.require_subcommand(1);

  std::string config_path, out_dir, data_dir, variant, fcn_row, resume, checkpoint, op_filter,
      split;
  std::uint64_t seed = 0;
  int count = 0, epochs = 0, batch_size = 0;
  double epsilon = 0.0, lambda = 0.0, contrast = 0.0, noise = 0.0;
  bool contours = false, no_augment = false;

  auto add_global = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "config file (key = value lines)");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--seed", seed, "random seed");
  };

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  add_global(synth);
  synth->add_option("--count", count, "number of samples");
  synth->add_option("--split", split, "train|test");
  synth->add_option("--contrast", contrast, "foreground lift over background");
  synth->add_option("--noise", noise, "additive Gaussian noise sigma");

  CLI::App* train_cmd = app.add_subcommand("train", "train a variant on a dataset");
  add_global(train_cmd);
  train_cmd->add_option("--data", data_dir, "dataset directory");
  train_cmd->add_option("--variant", variant, "model variant");
  train_cmd->add_option("--fcn", fcn_row, "single-FCN architecture row (fcn1..fcn4)");
  train_cmd->add_option("--epochs", epochs, "training epochs (extra epochs when resuming)");
  train_cmd->add_option("--batch-size", batch_size, "minibatch size");
  train_cmd->add_option("--epsilon", epsilon, "adversarial perturbation radius");
  train_cmd->add_option("--lambda", lambda, "CRF-side L2 penalty weight");
  train_cmd->add_option("--resume", resume, "checkpoint to continue from");
  train_cmd->add_flag("--no-augment", no_augment, "skip 4x flip augmentation");

  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  add_global(eval_cmd);
  eval_cmd->add_option("--data", data_dir, "dataset directory");
  eval_cmd->add_option("--checkpoint", checkpoint, "trained checkpoint");
  eval_cmd->add_flag("--contours", contours, "write contour overlay PNGs");

  CLI::App* grad = app.add_subcommand("gradcheck", "finite-difference gradient report");
  add_global(grad);
  grad->add_option("--op", op_filter, "only checks whose name contains this");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) cfg.load_file(config_path);
    CLI::App* sub = app.get_subcommands().front();
    auto passed = [&](const char* name) {
      const CLI::Option* opt = sub->get_option_no_throw(name);
      return opt != nullptr && opt->count() > 0;
    };
    if (passed("--seed")) cfg.set("seed", std::to_string(seed));
    if (passed("--out")) cfg.out_dir = out_dir;
    if (passed("--count")) cfg.set("synth.count", std::to_string(count));
    if (passed("--split")) cfg.set("synth.split", split);
    if (passed("--contrast")) cfg.synth_contrast = contrast;
    if (passed("--noise")) cfg.synth_noise = noise;
    if (passed("--data")) cfg.data_dir = data_dir;
    if (passed("--variant")) cfg.set("train.variant", variant);
    if (passed("--fcn")) cfg.train.fcn_row = fcn_row;
    if (passed("--epochs")) cfg.train.epochs = epochs;
    if (passed("--batch-size")) cfg.train.batch_size = batch_size;
    if (passed("--epsilon")) cfg.train.epsilon = epsilon;
    if (passed("--lambda")) cfg.train.lambda = lambda;
    if (passed("--resume")) cfg.resume = resume;
    if (passed("--no-augment")) cfg.augment = false;
    if (passed("--checkpoint")) cfg.checkpoint = checkpoint;
    if (passed("--contours")) cfg.contours = contours;

    if (sub == synth) return cmd_synth(cfg);
    if (sub == train_cmd) return cmd_train(cfg);
    if (sub == eval_cmd) return cmd_eval(cfg);
    return cmd_gradcheck(cfg, op_filter);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    std::cerr << "run '" << argv[0] << " --help' for usage\n";
    return 1;
  } catch (const BadParamError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    std::cerr << "run '" << argv[0] << " --help' for usage\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

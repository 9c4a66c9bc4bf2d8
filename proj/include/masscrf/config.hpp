#pragma once

#include <string>

#include "masscrf/trainer.hpp"

namespace masscrf {

// Flat key=value run configuration shared by all subcommands. Every field
// has a default; file values are applied first, then command-line flags.
// Unknown keys raise ConfigError so typos never pass silently.
struct RunConfig {
  std::uint64_t seed = 1;
  std::string out_dir = "out";

  std::string data_dir;  // dataset directory for train/eval
  bool augment = true;   // train-split 4x flip augmentation

  int synth_count = 400;
  std::string synth_split = "train";
  double synth_contrast = 0.25;
  double synth_noise = 0.15;

  TrainConfig train;
  std::string resume;  // checkpoint to continue from; empty = fresh run

  std::string checkpoint;  // eval input
  bool contours = false;   // eval contour PNGs

  // Applies one key=value pair; throws ConfigError on unknown key or a
  // value that does not parse.
  void set(const std::string& key, const std::string& value);

  // Parses a config file (key = value lines, # comments, blank lines).
  void load_file(const std::string& path);

  // Canonical echo of every key with its resolved value.
  std::string resolved() const;
};

}  // namespace masscrf

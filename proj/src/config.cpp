#include "masscrf/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace masscrf {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw ConfigError("config key '" + key + "': expected a boolean, got '" + v + "'");
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  }
}

long long parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    long long n = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
  }
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "seed") {
    seed = static_cast<std::uint64_t>(parse_int(key, value));
    train.seed = seed;
  } else if (key == "out") {
    out_dir = value;
  } else if (key == "data.dir") {
    data_dir = value;
  } else if (key == "data.augment") {
    augment = parse_bool(key, value);
  } else if (key == "synth.count") {
    synth_count = static_cast<int>(parse_int(key, value));
  } else if (key == "synth.split") {
    if (value != "train" && value != "test")
      throw ConfigError("config key 'synth.split': expected train|test, got '" + value + "'");
    synth_split = value;
  } else if (key == "synth.contrast") {
    synth_contrast = parse_double(key, value);
  } else if (key == "synth.noise") {
    synth_noise = parse_double(key, value);
  } else if (key == "train.variant") {
    train.variant = variant_from_name(value);
  } else if (key == "train.fcn") {
    train.fcn_row = value;
  } else if (key == "train.lr") {
    train.adam.lr = parse_double(key, value);
  } else if (key == "train.beta1") {
    train.adam.beta1 = parse_double(key, value);
  } else if (key == "train.beta2") {
    train.adam.beta2 = parse_double(key, value);
  } else if (key == "train.adam_eps") {
    train.adam.eps = parse_double(key, value);
  } else if (key == "train.epochs") {
    train.epochs = static_cast<int>(parse_int(key, value));
  } else if (key == "train.batch_size") {
    train.batch_size = static_cast<int>(parse_int(key, value));
  } else if (key == "train.epsilon") {
    train.epsilon = parse_double(key, value);
  } else if (key == "train.lambda") {
    train.lambda = parse_double(key, value);
  } else if (key == "train.resume") {
    resume = value;
  } else if (key == "crf.theta_alpha") {
    train.crf.theta_alpha = parse_double(key, value);
  } else if (key == "crf.theta_beta") {
    train.crf.theta_beta = parse_double(key, value);
  } else if (key == "crf.theta_gamma") {
    train.crf.theta_gamma = parse_double(key, value);
  } else if (key == "crf.t_train") {
    train.crf.t_train = static_cast<int>(parse_int(key, value));
  } else if (key == "crf.t_test") {
    train.crf.t_test = static_cast<int>(parse_int(key, value));
  } else if (key == "crf.update_form") {
    if (value == "paper") train.crf.update_form = UpdateForm::Paper;
    else if (value == "conventional") train.crf.update_form = UpdateForm::Conventional;
    else
      throw ConfigError("config key 'crf.update_form': expected paper|conventional, got '" +
                        value + "'");
  } else if (key == "crf.w_init") {
    train.crf.w_init = parse_double(key, value);
  } else if (key == "eval.checkpoint") {
    checkpoint = value;
  } else if (key == "eval.contours") {
    contours = parse_bool(key, value);
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

std::string RunConfig::resolved() const {
  std::ostringstream os;
  os << "seed = " << seed << "\n";
  os << "out = " << out_dir << "\n";
  os << "data.dir = " << data_dir << "\n";
  os << "data.augment = " << (augment ? "true" : "false") << "\n";
  os << "synth.count = " << synth_count << "\n";
  os << "synth.split = " << synth_split << "\n";
  os << "synth.contrast = " << fmt(synth_contrast) << "\n";
  os << "synth.noise = " << fmt(synth_noise) << "\n";
  os << "train.variant = " << variant_name(train.variant) << "\n";
  os << "train.fcn = " << train.fcn_row << "\n";
  os << "train.lr = " << fmt(train.adam.lr) << "\n";
  os << "train.beta1 = " << fmt(train.adam.beta1) << "\n";
  os << "train.beta2 = " << fmt(train.adam.beta2) << "\n";
  os << "train.adam_eps = " << fmt(train.adam.eps) << "\n";
  os << "train.epochs = " << train.epochs << "\n";
  os << "train.batch_size = " << train.batch_size << "\n";
  os << "train.epsilon = " << fmt(train.epsilon) << "\n";
  os << "train.lambda = " << fmt(train.lambda) << "\n";
  os << "train.resume = " << resume << "\n";
  os << "crf.theta_alpha = " << fmt(train.crf.theta_alpha) << "\n";
  os << "crf.theta_beta = " << fmt(train.crf.theta_beta) << "\n";
  os << "crf.theta_gamma = " << fmt(train.crf.theta_gamma) << "\n";
  os << "crf.t_train = " << train.crf.t_train << "\n";
  os << "crf.t_test = " << train.crf.t_test << "\n";
  os << "crf.update_form = "
     << (train.crf.update_form == UpdateForm::Paper ? "paper" : "conventional") << "\n";
  os << "crf.w_init = " << fmt(train.crf.w_init) << "\n";
  os << "eval.checkpoint = " << checkpoint << "\n";
  os << "eval.contours = " << (contours ? "true" : "false") << "\n";
  return os.str();
}

}  // namespace masscrf

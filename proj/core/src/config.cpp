#include "swdnet/config.hpp"

#include <fstream>
#include <sstream>

#include "swdnet/errors.hpp"

namespace swdnet {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

int to_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const int r = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const uint64_t r = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected an unsigned integer, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "on" || v == "true" || v == "1" || v == "yes") return true;
  if (v == "off" || v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected on/off, got '" + v + "'");
}

}  // namespace

int ExperimentConfig::resolved_finetune_epochs() const {
  if (finetune_epochs >= 0) return finetune_epochs;
  if (method == "han") return 3;
  if (method == "liu") return 10;
  return 0;
}

int ExperimentConfig::num_classes() const {
  return dataset == "synthetic" ? synthetic_classes : 10;
}

std::string ExperimentConfig::resolved_run_name() const {
  if (!run_name.empty()) return run_name;
  std::ostringstream os;
  os << method << "_" << model << "_" << dataset << "_seed" << seed;
  return os.str();
}

std::string ExperimentConfig::summary() const {
  std::ostringstream os;
  os << "model=" << model;
  if (model == "mini_resnet") os << ";depth_blocks=" << depth_blocks << ";base_width=" << base_width;
  os << ";dataset=" << dataset;
  if (dataset == "synthetic")
    os << ";synthetic_n=" << synthetic_n << ";synthetic_classes=" << synthetic_classes
       << ";synthetic_channels=" << synthetic_channels << ";synthetic_size=" << synthetic_size
       << ";synthetic_margin=" << synthetic_margin;
  os << ";method=" << method << ";structure=" << structure << ";T=" << T << ";epochs=" << epochs
     << ";batch_size=" << batch_size << ";lr_schedule=" << lr_schedule << ";lr=" << lr
     << ";momentum=" << momentum << ";mu=" << mu << ";weight_decay=" << (weight_decay ? "on" : "off")
     << ";augment=" << (augment ? "on" : "off");
  if (method == "swd")
    os << ";a_min=" << a_min << ";a_max=" << a_max << ";reselect_interval=" << reselect_interval;
  if (method == "liu") os << ";lambda=" << lambda;
  if (method == "han") os << ";iterations=" << iterations;
  if (method == "han" || method == "liu") os << ";finetune_epochs=" << resolved_finetune_epochs();
  os << ";seed=" << seed;
  return os.str();
}

void apply_override(ExperimentConfig& c, const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (key == "model") c.model = v;
  else if (key == "depth_blocks") c.depth_blocks = to_int(key, v);
  else if (key == "base_width") c.base_width = to_int(key, v);
  else if (key == "dataset") c.dataset = v;
  else if (key == "data_dir") c.data_dir = v;
  else if (key == "synthetic_n") c.synthetic_n = to_int(key, v);
  else if (key == "synthetic_test_n") c.synthetic_test_n = to_int(key, v);
  else if (key == "synthetic_classes") c.synthetic_classes = to_int(key, v);
  else if (key == "synthetic_channels") c.synthetic_channels = to_int(key, v);
  else if (key == "synthetic_size") c.synthetic_size = to_int(key, v);
  else if (key == "synthetic_margin") c.synthetic_margin = to_double(key, v);
  else if (key == "method") c.method = v;
  else if (key == "structure") c.structure = v;
  else if (key == "T") c.T = to_double(key, v);
  else if (key == "epochs") c.epochs = to_int(key, v);
  else if (key == "batch_size") c.batch_size = to_int(key, v);
  else if (key == "lr_schedule") c.lr_schedule = v;
  else if (key == "lr") c.lr = to_double(key, v);
  else if (key == "momentum") c.momentum = to_double(key, v);
  else if (key == "mu") c.mu = to_double(key, v);
  else if (key == "weight_decay") c.weight_decay = to_bool(key, v);
  else if (key == "augment") c.augment = to_bool(key, v);
  else if (key == "a_min") c.a_min = to_double(key, v);
  else if (key == "a_max") c.a_max = to_double(key, v);
  else if (key == "reselect_interval") c.reselect_interval = to_int(key, v);
  else if (key == "lambda") c.lambda = to_double(key, v);
  else if (key == "iterations") c.iterations = to_int(key, v);
  else if (key == "finetune_epochs") c.finetune_epochs = to_int(key, v);
  else if (key == "seed") c.seed = to_u64(key, v);
  else if (key == "out_dir") c.out_dir = v;
  else if (key == "run_name") c.run_name = v;
  else if (key == "checkpoint_every") c.checkpoint_every = to_int(key, v);
  else throw ConfigError("unknown config key '" + key + "'");
}

ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file '" + path + "'");
  ExperimentConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
    apply_override(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

void validate(const ExperimentConfig& c) {
  if (c.model != "lenet5" && c.model != "mini_resnet")
    throw ConfigError("model: expected lenet5 or mini_resnet, got '" + c.model + "'");
  if (c.model == "mini_resnet") {
    if (c.depth_blocks < 1) throw ConfigError("depth_blocks: must be >= 1");
    if (c.base_width < 1) throw ConfigError("base_width: must be >= 1");
  }
  if (c.dataset != "mnist" && c.dataset != "cifar10" && c.dataset != "synthetic")
    throw ConfigError("dataset: expected mnist, cifar10 or synthetic, got '" + c.dataset + "'");
  if (c.dataset == "synthetic") {
    if (c.synthetic_n < 0 || c.synthetic_test_n < 0) throw ConfigError("synthetic_n: must be >= 0");
    if (c.synthetic_classes < 2) throw ConfigError("synthetic_classes: must be >= 2");
    if (c.synthetic_channels < 1) throw ConfigError("synthetic_channels: must be >= 1");
    if (c.synthetic_size < 1) throw ConfigError("synthetic_size: must be >= 1");
    if (c.synthetic_margin < 0) throw ConfigError("synthetic_margin: must be >= 0");
    if (c.synthetic_classes > c.synthetic_channels)
      throw ConfigError("synthetic_classes: must be <= synthetic_channels (class means are "
                        "per-channel constants)");
  }
  if (c.model == "lenet5" && c.dataset == "cifar10")
    throw ConfigError("model: lenet5 expects 1-channel 28x28 input; cifar10 is 3x32x32");
  if (c.method != "baseline" && c.method != "swd" && c.method != "han" && c.method != "liu")
    throw ConfigError("method: expected baseline, swd, han or liu, got '" + c.method + "'");
  if (c.structure != "unstructured" && c.structure != "structured")
    throw ConfigError("structure: expected unstructured or structured, got '" + c.structure + "'");
  if (c.structure == "structured" && c.model == "lenet5")
    throw ConfigError("structure: structured pruning needs batchnorm scales; lenet5 has none");
  if (c.T < 0.0 || c.T > 1.0) throw ConfigError("T: must lie in [0,1], got " + std::to_string(c.T));
  if (c.epochs < 1) throw ConfigError("epochs: must be >= 1");
  if (c.batch_size < 1) throw ConfigError("batch_size: must be >= 1");
  if (c.lr_schedule != "three_phase" && c.lr_schedule != "constant")
    throw ConfigError("lr_schedule: expected three_phase or constant");
  if (c.lr <= 0.0) throw ConfigError("lr: must be > 0");
  if (c.momentum < 0.0 || c.momentum >= 1.0) throw ConfigError("momentum: must lie in [0,1)");
  if (c.mu < 0.0) throw ConfigError("mu: must be >= 0");
  if (c.method == "swd") {
    if (c.a_min > c.a_max)
      throw ConfigError("a_min: must be <= a_max (got a_min=" + std::to_string(c.a_min) +
                        ", a_max=" + std::to_string(c.a_max) + ")");
    if (c.a_min < 0.0) throw ConfigError("a_min: must be >= 0");
    if (c.a_min == 0.0 && c.a_max != 0.0)
      throw ConfigError("a_min: must be > 0 when a_max > 0 (exponential schedule)");
    if (c.reselect_interval < 1) throw ConfigError("reselect_interval: must be >= 1");
  }
  if (c.method == "liu") {
    if (c.lambda < 0.0) throw ConfigError("lambda: must be >= 0");
    if (c.structure != "structured")
      throw ConfigError("structure: method liu prunes batchnorm channels; set structure = structured");
  }
  if (c.method == "han") {
    if (c.iterations < 1) throw ConfigError("iterations: must be >= 1");
    if (c.structure != "unstructured")
      throw ConfigError("structure: method han is magnitude (unstructured) pruning");
  }
  if (c.finetune_epochs < -1) throw ConfigError("finetune_epochs: must be >= 0");
  if (c.checkpoint_every < 0) throw ConfigError("checkpoint_every: must be >= 0");
}

}  // namespace swdnet

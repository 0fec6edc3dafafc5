#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace swdnet {

// Flat key=value experiment description; every field has a CLI flag of the
// same name. Validation is field-level and happens before any compute.
struct ExperimentConfig {
  std::string model = "lenet5";  // lenet5 | mini_resnet
  int depth_blocks = 3;
  int base_width = 16;

  std::string dataset = "mnist";  // mnist | cifar10 | synthetic
  std::string data_dir = "data";
  int synthetic_n = 2048;
  int synthetic_test_n = 512;
  int synthetic_classes = 4;
  int synthetic_channels = 8;  // class means are per-channel constants: classes <= channels
  int synthetic_size = 12;     // H = W
  double synthetic_margin = 4.0;

  std::string method = "baseline";         // baseline | swd | han | liu
  std::string structure = "unstructured";  // unstructured | structured
  double T = 0.0;

  int epochs = 10;
  int batch_size = 128;
  std::string lr_schedule = "three_phase";  // three_phase | constant
  double lr = 0.1;
  double momentum = 0.9;
  double mu = 5e-4;
  bool weight_decay = true;  // apply mu*w in the optimizer (SWD keeps mu either way)
  bool augment = false;

  double a_min = 1e-1;
  double a_max = 1e5;
  int reselect_interval = 1;

  double lambda = 1e-4;
  int iterations = 5;
  int finetune_epochs = -1;  // -1: per-method default (3 for han, 10 for liu)

  uint64_t seed = 1;
  std::string out_dir = "runs";
  std::string run_name;  // derived from method/model/dataset when empty
  int checkpoint_every = 0;  // epochs between checkpoints; 0 = final only

  int resolved_finetune_epochs() const;
  int num_classes() const;
  std::string resolved_run_name() const;
  // canonical "key=value;..." snapshot (deterministic order)
  std::string summary() const;
};

ExperimentConfig parse_config_file(const std::string& path);
void apply_override(ExperimentConfig& cfg, const std::string& key, const std::string& value);
void validate(const ExperimentConfig& cfg);

}  // namespace swdnet

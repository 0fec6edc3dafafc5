#pragma once

#include <string>
#include <utility>
#include <vector>

#include "swdnet/config.hpp"
#include "swdnet/trainer.hpp"

namespace swdnet {

struct RunReport {
  std::string config;  // canonical config snapshot
  long long params_before = 0;
  long long params_after = 0;
  double params_pct = 100.0;
  long long macs_before = 0;
  long long macs_after = 0;
  double acc_before_removal = 0.0;
  double acc_after_removal = 0.0;
  bool collapsed = false;
  double wall_time_s = 0.0;
};

inline constexpr const char* kReportHeader =
    "config,params_before,params_after,params_pct,macs_before,macs_after,"
    "acc_before_removal,acc_after_removal,collapsed,wall_time_s";

// Executes the configured pipeline end to end and writes, under
// out_dir/<run_name>/, history.csv plus mask.json and a final checkpoint
// where applicable; appends one row to out_dir/report.csv. A structural
// collapse is reported as chance-level accuracy with the collapsed flag
// rather than aborting the run.
RunReport run(const ExperimentConfig& cfg, const std::string& resume_path = "");

// Runs every (a_min, a_max) pair with the identical seed; returns
// (acc_before, acc_after) indexed [a_max_idx][a_min_idx] and optionally
// writes the matrix as CSV (rows a_max, columns a_min).
std::vector<std::vector<std::pair<double, double>>> grid_search(
    const ExperimentConfig& base, const std::vector<double>& a_mins,
    const std::vector<double>& a_maxs, const std::string& matrix_csv_path = "");

// Rebuilds the model from the config, loads the checkpoint, evaluates on the
// configured test split.
double eval_checkpoint(const ExperimentConfig& cfg, const std::string& checkpoint_path);

void append_report_row(const std::string& path, const RunReport& report);
std::vector<RunReport> read_report_csv(const std::string& path);
void write_history_csv(const std::string& path, const TrainHistory& history);
std::string report_table(const std::vector<RunReport>& rows);

// dataset loading per config (exposed for tests and the eval verb)
Dataset load_dataset(const ExperimentConfig& cfg, Split split);
ModelGraph build_model(const ExperimentConfig& cfg, const Dataset& sample_of);

}  // namespace swdnet

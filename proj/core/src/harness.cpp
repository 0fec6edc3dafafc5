#include "swdnet/harness.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "swdnet/baselines.hpp"
#include "swdnet/checkpoint.hpp"
#include "swdnet/errors.hpp"
#include "swdnet/prune.hpp"
#include "swdnet/rng.hpp"
#include "swdnet/swd.hpp"

namespace fs = std::filesystem;

namespace swdnet {

namespace {

std::string fmt_double(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

PruneMask empty_mask() { return PruneMask{}; }

}  // namespace

Dataset load_dataset(const ExperimentConfig& cfg, Split split) {
  Dataset ds;
  if (cfg.dataset == "mnist") {
    const std::string dir = cfg.data_dir + "/mnist/";
    ds = split == Split::Train
             ? load_mnist_idx(dir + "train-images-idx3-ubyte", dir + "train-labels-idx1-ubyte")
             : load_mnist_idx(dir + "t10k-images-idx3-ubyte", dir + "t10k-labels-idx1-ubyte");
  } else if (cfg.dataset == "cifar10") {
    const std::string dir = cfg.data_dir + "/cifar-10-batches-bin/";
    std::vector<std::string> paths;
    if (split == Split::Train)
      for (int i = 1; i <= 5; ++i) paths.push_back(dir + "data_batch_" + std::to_string(i) + ".bin");
    else
      paths.push_back(dir + "test_batch.bin");
    ds = load_cifar10_bin(paths);
  } else {
    // shared centroids across splits, distinct noise draws
    ds = synthetic_blobs(cfg.seed, split == Split::Train ? cfg.synthetic_n : cfg.synthetic_test_n,
                         cfg.synthetic_classes,
                         {cfg.synthetic_channels, cfg.synthetic_size, cfg.synthetic_size},
                         cfg.synthetic_margin, split == Split::Train ? 0 : 1);
  }
  ds.split = split;
  return ds;
}

ModelGraph build_model(const ExperimentConfig& cfg, const Dataset& sample_of) {
  const Shape s = sample_of.sample_shape();
  if (cfg.model == "lenet5") {
    if (s != Shape{1, 28, 28})
      throw ConfigError("model: lenet5 expects 1x28x28 input, dataset provides " + shape_str(s));
    return build_lenet5(cfg.num_classes());
  }
  ModelGraph g = build_mini_resnet(cfg.depth_blocks, cfg.base_width, cfg.num_classes(), s[0]);
  return g;
}

void write_history_csv(const std::string& path, const TrainHistory& history) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error("cannot write history to '" + path + "'");
  f << "epoch,step,a,train_loss,test_acc,churn,selected_count\n";
  for (const EpochStats& r : history)
    f << r.epoch << ',' << r.step << ',' << fmt_double(r.a) << ',' << fmt_double(r.train_loss)
      << ',' << fmt_double(r.test_acc) << ',' << fmt_double(r.churn) << ',' << r.selected_count
      << '\n';
}

void append_report_row(const std::string& path, const RunReport& r) {
  const bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
  std::ofstream f(path, std::ios::app);
  if (!f) throw Error("cannot append report to '" + path + "'");
  std::ostringstream row;
  if (fresh) row << kReportHeader << '\n';
  row << '"' << r.config << "\"," << r.params_before << ',' << r.params_after << ','
      << fmt_double(r.params_pct) << ',' << r.macs_before << ',' << r.macs_after << ','
      << fmt_double(r.acc_before_removal) << ',' << fmt_double(r.acc_after_removal) << ','
      << (r.collapsed ? 1 : 0) << ',' << fmt_double(r.wall_time_s) << '\n';
  f << row.str();  // single buffered write per row
  f.flush();
}

std::vector<RunReport> read_report_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open report '" + path + "'");
  std::vector<RunReport> rows;
  std::string line;
  bool first = true;
  while (std::getline(f, line)) {
    if (first) {
      first = false;
      if (line.rfind("config,", 0) == 0 || line.rfind("\"config\"", 0) == 0) continue;
    }
    if (line.empty()) continue;
    RunReport r;
    size_t pos = 0;
    if (line[0] == '"') {
      const size_t close = line.find('"', 1);
      if (close == std::string::npos) throw DataError("report: unterminated config field");
      r.config = line.substr(1, close - 1);
      pos = close + 2;  // skip quote and comma
    } else {
      pos = line.find(',') + 1;
      r.config = line.substr(0, pos - 1);
    }
    std::istringstream rest(line.substr(pos));
    std::string tok;
    auto next = [&]() {
      if (!std::getline(rest, tok, ',')) throw DataError("report: short row");
      return tok;
    };
    r.params_before = std::stoll(next());
    r.params_after = std::stoll(next());
    r.params_pct = std::stod(next());
    r.macs_before = std::stoll(next());
    r.macs_after = std::stoll(next());
    r.acc_before_removal = std::stod(next());
    r.acc_after_removal = std::stod(next());
    r.collapsed = std::stoi(next()) != 0;
    r.wall_time_s = std::stod(next());
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string report_table(const std::vector<RunReport>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(12) << "params_pct" << std::setw(12) << "acc_before"
     << std::setw(12) << "acc_after" << std::setw(10) << "collapsed" << "config\n";
  std::vector<const RunReport*> sorted;
  for (const RunReport& r : rows) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(), [](const RunReport* a, const RunReport* b) {
    return a->params_pct > b->params_pct;
  });
  os << std::fixed << std::setprecision(2);
  for (const RunReport* r : sorted)
    os << std::left << std::setw(12) << r->params_pct << std::setw(12) << r->acc_before_removal
       << std::setw(12) << r->acc_after_removal << std::setw(10) << (r->collapsed ? "yes" : "no")
       << r->config << '\n';
  return os.str();
}

RunReport run(const ExperimentConfig& cfg, const std::string& resume_path) {
  validate(cfg);
  const auto t0 = std::chrono::steady_clock::now();

  const Dataset train = load_dataset(cfg, Split::Train);
  const Dataset test = load_dataset(cfg, Split::Test);
  if (train.size() == 0) throw DataError("training split is empty");

  ModelGraph graph = build_model(cfg, train);
  init_parameters(graph, cfg.seed);

  SgdState opt;
  opt.momentum = static_cast<float>(cfg.momentum);
  opt.mu = cfg.weight_decay ? static_cast<float>(cfg.mu) : 0.0f;
  opt.attach(graph);

  TrainLoopOptions lo;
  lo.epochs = cfg.epochs;
  lo.batch_size = cfg.batch_size;
  lo.seed = cfg.seed;
  lo.lr_policy = cfg.lr_schedule == "three_phase" ? LrPolicy::ThreePhase : LrPolicy::Constant;
  lo.base_lr = static_cast<float>(cfg.lr);
  lo.augment = cfg.augment;

  const long long steps_per_epoch = num_batches(train.size(), cfg.batch_size);
  SwdConfig swd_cfg;
  swd_cfg.schedule = {cfg.a_min, cfg.a_max, 0, static_cast<long long>(cfg.epochs) * steps_per_epoch};
  swd_cfg.target = PruneTarget{cfg.T};
  swd_cfg.structure =
      cfg.structure == "structured" ? Structure::Structured : Structure::Unstructured;
  swd_cfg.mu = static_cast<float>(cfg.mu);
  swd_cfg.reselect_interval = cfg.reselect_interval;
  if (cfg.method == "baseline") swd_cfg.schedule = {0.0, 0.0, 0, swd_cfg.schedule.s_final};

  TrainLoopState state;
  if (!resume_path.empty()) {
    if (cfg.method != "baseline" && cfg.method != "swd")
      throw ConfigError("resume is supported for baseline and swd runs only");
    ResumeInfo info = checkpoint_load(resume_path, graph, opt);
    swd_cfg.schedule = info.schedule;
    lo.start_epoch = info.progress.next_epoch;
    lo.epochs = cfg.epochs - info.progress.next_epoch;
    if (lo.epochs < 0) throw ConfigError("resume: checkpoint is past the configured epoch count");
    lo.total_epochs_hint = cfg.epochs;
    state.step = info.progress.step;
  }

  const std::string run_dir = cfg.out_dir + "/" + cfg.resolved_run_name();
  fs::create_directories(run_dir);
  const std::string ckpt_path = run_dir + "/checkpoint.swdnet";

  EpochHook epoch_hook;
  if (cfg.checkpoint_every > 0 && (cfg.method == "baseline" || cfg.method == "swd")) {
    epoch_hook = [&](int epoch, long long step) {
      if ((epoch + 1) % cfg.checkpoint_every != 0) return;
      checkpoint_save(graph, opt, swd_cfg.schedule, {epoch + 1, step}, cfg.seed, ckpt_path);
    };
  }

  RunReport report;
  report.config = cfg.summary();
  report.params_before = graph.total_params();
  report.macs_before = count_macs(graph, empty_mask(), train.sample_shape());
  report.params_after = report.params_before;
  report.macs_after = report.macs_before;

  TrainHistory history;
  std::string mask_json;
  bool arch_preserved = true;  // soft masking keeps the architecture; hard pruning does not
  try {
    if (cfg.method == "baseline" || cfg.method == "swd") {
      history = train_swd(graph, train, test, opt, swd_cfg, lo, state, epoch_hook);
      if (cfg.method == "baseline") {
        const double acc = evaluate(graph, test, cfg.batch_size);
        report.acc_before_removal = acc;
        report.acc_after_removal = acc;
      } else {
        RemovalResult rr = final_removal(graph, test, swd_cfg.target, swd_cfg.structure,
                                         cfg.batch_size);
        report.acc_before_removal = rr.acc_before;
        report.acc_after_removal = rr.acc_after;
        if (swd_cfg.structure == Structure::Structured) {
          report.params_after = graph.total_params();
          report.macs_after = count_macs(graph, empty_mask(), train.sample_shape());
          arch_preserved = false;
        } else {
          report.params_after = count_params(graph, rr.mask);
          // unstructured masks leave the architecture (and MAC count) intact
        }
        mask_json = std::move(rr.mask_json);
      }
    } else if (cfg.method == "han") {
      IterativePlan plan;
      plan.iterations = cfg.iterations;
      plan.final_T = cfg.T;
      plan.finetune_epochs.assign(static_cast<size_t>(cfg.iterations),
                                  cfg.resolved_finetune_epochs());
      HanResult hr = train_han(graph, train, test, opt, plan, lo, state);
      history = std::move(hr.history);
      report.acc_before_removal = hr.acc_base;
      report.acc_after_removal = hr.acc_final;
      if (cfg.T > 0.0) {
        report.params_after = count_params(graph, hr.final_mask);
        mask_json = mask_to_json(graph, hr.final_mask);
      }
    } else {  // liu
      LiuOptions liu;
      liu.lambda = cfg.lambda;
      liu.target = PruneTarget{cfg.T};
      liu.finetune_epochs = cfg.resolved_finetune_epochs();
      LiuResult lr = train_liu(graph, train, test, opt, liu, lo, state);
      history = std::move(lr.history);
      report.acc_before_removal = lr.acc_before;
      report.acc_after_removal = lr.acc_after;
      mask_json = std::move(lr.mask_json);
      if (cfg.T > 0.0) {
        report.params_after = graph.total_params();
        report.macs_after = count_macs(graph, empty_mask(), train.sample_shape());
        arch_preserved = false;
      }
    }
  } catch (const CollapseError&) {
    report.collapsed = true;
    report.acc_before_removal = evaluate(graph, test, cfg.batch_size);
    report.acc_after_removal = 100.0 / cfg.num_classes();  // chance level
    report.params_after = report.params_before;
    report.macs_after = report.macs_before;
  }
  report.params_pct =
      100.0 * static_cast<double>(report.params_after) / static_cast<double>(report.params_before);

  write_history_csv(run_dir + "/history.csv", history);
  if (!mask_json.empty()) {
    std::ofstream mf(run_dir + "/mask.json", std::ios::trunc);
    mf << mask_json;
  }
  if (arch_preserved && !report.collapsed)
    checkpoint_save(graph, opt, swd_cfg.schedule, {lo.start_epoch + lo.epochs, state.step},
                    cfg.seed, ckpt_path);

  report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  append_report_row(cfg.out_dir + "/report.csv", report);
  return report;
}

std::vector<std::vector<std::pair<double, double>>> grid_search(
    const ExperimentConfig& base, const std::vector<double>& a_mins,
    const std::vector<double>& a_maxs, const std::string& matrix_csv_path) {
  if (a_mins.empty() || a_maxs.empty())
    throw ConfigError("grid: need at least one a_min and one a_max value");
  std::vector<std::vector<std::pair<double, double>>> matrix;
  for (double amax : a_maxs) {
    std::vector<std::pair<double, double>> row;
    for (double amin : a_mins) {
      ExperimentConfig cfg = base;
      cfg.method = "swd";
      cfg.a_min = amin;
      cfg.a_max = amax;
      std::ostringstream name;
      name << base.resolved_run_name() << "_amin" << amin << "_amax" << amax;
      cfg.run_name = name.str();
      RunReport r = run(cfg);
      row.emplace_back(r.acc_before_removal, r.acc_after_removal);
    }
    matrix.push_back(std::move(row));
  }
  if (!matrix_csv_path.empty()) {
    std::ofstream f(matrix_csv_path, std::ios::trunc);
    if (!f) throw Error("cannot write grid matrix to '" + matrix_csv_path + "'");
    f << "a_max\\a_min";
    for (double amin : a_mins) f << ',' << amin;
    f << '\n';
    for (size_t i = 0; i < a_maxs.size(); ++i) {
      f << a_maxs[i];
      for (const auto& [before, after] : matrix[i])
        f << ',' << std::fixed << std::setprecision(2) << before << '/' << after;
      f << '\n';
    }
  }
  return matrix;
}

double eval_checkpoint(const ExperimentConfig& cfg, const std::string& checkpoint_path) {
  validate(cfg);
  const Dataset test = load_dataset(cfg, Split::Test);
  ModelGraph graph = build_model(cfg, test);
  SgdState opt;
  checkpoint_load(checkpoint_path, graph, opt);
  return evaluate(graph, test, cfg.batch_size);
}

}  // namespace swdnet

#pragma once

#include "swdnet/prune.hpp"
#include "swdnet/trainer.hpp"

namespace swdnet {

// Exponential penalty schedule: a(s) = a_min * exp((s/s_final) * ln(a_max/a_min)),
// negligible early so the network converges, dominant late so the selected
// weights are effectively pruned before removal.
struct SwdSchedule {
  double a_min = 0.1;
  double a_max = 1e5;
  long long s = 0;
  long long s_final = 1;
};

// Endpoints are exact: a(0) == a_min, a(s_final) == a_max. Equal bounds give a
// constant schedule (zero allowed); otherwise a_min must be positive.
double swd_coefficient(const SwdSchedule& schedule);

enum class Structure { Unstructured, Structured };

struct SwdConfig {
  SwdSchedule schedule;
  PruneTarget target;
  Structure structure = Structure::Unstructured;
  float mu = 5e-4f;           // shared with the optimizer's weight-decay coefficient
  int reselect_interval = 1;  // 1 recomputes w* every step
};

// Adds a*mu*w to the gradient of every selected entry. Structured selections
// penalize the channel's bn scale and the producing filter's kernel slice.
void swd_penalty_gradient(ModelGraph& graph, const PruneMask& mask, double a, float mu);

// The SWD loop: forward, backpropagate Err (+WD via the optimizer), recompute
// the selection every reselect_interval steps, add the selective penalty,
// step, advance the schedule. Nothing is frozen: selected weights keep their
// error gradients and can escape the selection later. config.schedule.s
// tracks the global step so checkpoints can resume mid-schedule.
TrainHistory train_swd(ModelGraph& graph, const Dataset& train, const Dataset& test,
                       SgdState& opt, SwdConfig& config, const TrainLoopOptions& options,
                       TrainLoopState& state, const EpochHook& epoch_hook = {});

struct RemovalResult {
  double acc_before = 0.0;
  double acc_after = 0.0;
  PruneMask mask;
  std::string mask_json;  // serialized against the pre-removal graph
};

// The single post-training prune: evaluate, select at T and remove
// (soft-mask for unstructured, hard prune for structured), evaluate again.
RemovalResult final_removal(ModelGraph& graph, const Dataset& test, PruneTarget target,
                            Structure structure, int batch_size);

}  // namespace swdnet

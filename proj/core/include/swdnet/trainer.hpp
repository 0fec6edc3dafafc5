#pragma once

#include <functional>
#include <vector>

#include "swdnet/data.hpp"
#include "swdnet/model.hpp"
#include "swdnet/optim.hpp"

namespace swdnet {

struct EpochStats {
  int epoch = 0;
  long long step = 0;  // global step after this epoch
  double a = 0.0;
  double train_loss = 0.0;
  double test_acc = 0.0;
  double churn = 0.0;
  long long selected_count = 0;
};
using TrainHistory = std::vector<EpochStats>;

enum class LrPolicy { ThreePhase, Constant };

struct TrainLoopOptions {
  int epochs = 10;
  int batch_size = 128;
  uint64_t seed = 1;
  LrPolicy lr_policy = LrPolicy::Constant;
  float base_lr = 0.1f;
  int start_epoch = 0;        // resume point; batch order stays a function of (seed, epoch)
  int total_epochs_hint = 0;  // three-phase denominator when part of a longer plan (0 = epochs)
  bool augment = false;       // pad-4 crop + horizontal flip on training batches
};

struct StepInfo {
  double a = 0.0;
  double churn = 0.0;
  long long selected = 0;
  bool reselected = false;
};

// Runs after Err gradients are populated, before the optimizer step; penalty
// terms add themselves to the parameter gradients here.
using GradHook = std::function<StepInfo(long long step)>;
using EpochHook = std::function<void(int epoch, long long step)>;

struct TrainLoopState {
  long long step = 0;
};

// Top-1 accuracy in percent, eval-mode forward, deterministic order.
double evaluate(ModelGraph& graph, const Dataset& data, int batch_size);

TrainHistory train_loop(ModelGraph& graph, const Dataset& train, const Dataset& test,
                        SgdState& opt, const TrainLoopOptions& options, TrainLoopState& state,
                        const GradHook& hook = {}, const EpochHook& epoch_hook = {});

}  // namespace swdnet

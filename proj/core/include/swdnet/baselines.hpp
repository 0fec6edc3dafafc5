#pragma once

#include "swdnet/prune.hpp"
#include "swdnet/trainer.hpp"

namespace swdnet {

// Iterative magnitude prune + fine-tune: full base training, then per
// iteration i select at t_i = i * final_T / iterations, soft-mask (masked
// entries frozen at zero) and fine-tune.
struct IterativePlan {
  int iterations = 5;
  double final_T = 0.9;
  std::vector<int> finetune_epochs;  // one entry per iteration
  float finetune_lr = 1e-3f;

  double t_at(int i) const { return final_T * static_cast<double>(i) / iterations; }
  void validate() const;
};

struct HanResult {
  TrainHistory history;
  double acc_base = 0.0;   // after base training, before the first prune
  double acc_final = 0.0;  // after the last fine-tune
  PruneMask final_mask;
};

HanResult train_han(ModelGraph& graph, const Dataset& train, const Dataset& test, SgdState& opt,
                    const IterativePlan& plan, const TrainLoopOptions& base_options,
                    TrainLoopState& state);

// One-shot structured pruning: train with a smooth-L1 penalty on every
// prunable bn scale, prune once at T (hard removal), fine-tune.
struct LiuOptions {
  double lambda = 1e-4;
  PruneTarget target;
  int finetune_epochs = 10;
  float finetune_lr = 1e-3f;
};

struct LiuResult {
  TrainHistory history;
  double acc_before = 0.0;  // after penalized training, before removal
  double acc_after = 0.0;   // after hard prune + fine-tune
  std::string mask_json;    // selection serialized against the pre-removal graph
};

// Throws CollapseError when the target empties a layer.
LiuResult train_liu(ModelGraph& graph, const Dataset& train, const Dataset& test, SgdState& opt,
                    const LiuOptions& liu, const TrainLoopOptions& base_options,
                    TrainLoopState& state);

// x^2/2 for |x| < 1, |x| - 1/2 otherwise.
double smooth_l1(double x);
double smooth_l1_grad(double x);

}  // namespace swdnet

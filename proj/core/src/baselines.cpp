#include "swdnet/baselines.hpp"

#include <cmath>

#include "swdnet/errors.hpp"

namespace swdnet {

double smooth_l1(double x) {
  const double ax = std::fabs(x);
  return ax < 1.0 ? 0.5 * x * x : ax - 0.5;
}

double smooth_l1_grad(double x) {
  if (std::fabs(x) < 1.0) return x;
  return x > 0.0 ? 1.0 : -1.0;
}

void IterativePlan::validate() const {
  if (iterations < 1) throw ConfigError("han plan: iterations must be >= 1");
  if (final_T < 0.0 || final_T > 1.0) throw ConfigError("han plan: final_T must lie in [0,1]");
  if (static_cast<int>(finetune_epochs.size()) != iterations)
    throw ConfigError("han plan: need one fine-tune epoch count per iteration (got " +
                      std::to_string(finetune_epochs.size()) + " for " +
                      std::to_string(iterations) + " iterations)");
  for (int e : finetune_epochs)
    if (e < 0) throw ConfigError("han plan: negative fine-tune epochs");
}

HanResult train_han(ModelGraph& graph, const Dataset& train, const Dataset& test, SgdState& opt,
                    const IterativePlan& plan, const TrainLoopOptions& base_options,
                    TrainLoopState& state) {
  plan.validate();
  HanResult res;
  res.history = train_loop(graph, train, test, opt, base_options, state);
  res.acc_base = evaluate(graph, test, base_options.batch_size);

  if (plan.final_T == 0.0) {
    // nothing to prune; the pipeline reduces to base training
    res.acc_final = res.acc_base;
    return res;
  }

  int epoch_cursor = base_options.start_epoch + base_options.epochs;
  for (int i = 1; i <= plan.iterations; ++i) {
    const double t_i = plan.t_at(i);
    res.final_mask = select_unstructured(graph, PruneTarget{t_i});
    apply_soft_mask(graph, res.final_mask);

    TrainLoopOptions ft = base_options;
    ft.epochs = plan.finetune_epochs[static_cast<size_t>(i - 1)];
    ft.lr_policy = LrPolicy::Constant;
    ft.base_lr = plan.finetune_lr;
    ft.start_epoch = epoch_cursor;
    epoch_cursor += ft.epochs;

    const long long selected = res.final_mask.selected_count();
    GradHook report = [selected](long long) {
      StepInfo info;
      info.selected = selected;
      return info;
    };
    TrainHistory h = train_loop(graph, train, test, opt, ft, state, report);
    res.history.insert(res.history.end(), h.begin(), h.end());
  }
  res.acc_final = evaluate(graph, test, base_options.batch_size);
  return res;
}

LiuResult train_liu(ModelGraph& graph, const Dataset& train, const Dataset& test, SgdState& opt,
                    const LiuOptions& liu, const TrainLoopOptions& base_options,
                    TrainLoopState& state) {
  if (liu.lambda < 0.0) throw ConfigError("liu: lambda must be >= 0");
  if (liu.target.T < 0.0 || liu.target.T > 1.0)
    throw ConfigError("liu: prune target T must lie in [0,1]");

  GradHook penalty;
  if (liu.lambda > 0.0) {
    const float lambda = static_cast<float>(liu.lambda);
    penalty = [&graph, lambda](long long) {
      for (Param& p : graph.params) {
        if (p.role != ParamRole::BnScale || !p.prunable) continue;
        p.tensor.ensure_grad();
        for (size_t i = 0; i < p.tensor.data.size(); ++i)
          p.tensor.grad[i] +=
              lambda * static_cast<float>(smooth_l1_grad(static_cast<double>(p.tensor.data[i])));
      }
      return StepInfo{};
    };
  }

  LiuResult res;
  res.history = train_loop(graph, train, test, opt, base_options, state, penalty);
  res.acc_before = evaluate(graph, test, base_options.batch_size);

  if (liu.target.T == 0.0) {
    res.acc_after = res.acc_before;
    return res;
  }

  PruneMask mask = select_structured(graph, liu.target, /*enforce_survival=*/true);
  res.mask_json = mask_to_json(graph, mask);
  graph = hard_prune_structured(graph, mask);

  SgdState ft_opt;
  ft_opt.momentum = opt.momentum;
  ft_opt.mu = opt.mu;
  ft_opt.attach(graph);

  TrainLoopOptions ft = base_options;
  ft.epochs = liu.finetune_epochs;
  ft.lr_policy = LrPolicy::Constant;
  ft.base_lr = liu.finetune_lr;
  ft.start_epoch = base_options.start_epoch + base_options.epochs;

  TrainHistory h = train_loop(graph, train, test, ft_opt, ft, state);
  res.history.insert(res.history.end(), h.begin(), h.end());
  res.acc_after = evaluate(graph, test, base_options.batch_size);
  return res;
}

}  // namespace swdnet

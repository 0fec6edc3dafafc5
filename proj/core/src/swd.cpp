#include "swdnet/swd.hpp"

#include <cmath>

#include "swdnet/errors.hpp"

namespace swdnet {

double swd_coefficient(const SwdSchedule& schedule) {
  if (schedule.a_min == schedule.a_max) return schedule.a_min;
  if (schedule.a_min <= 0.0)
    throw ConfigError("swd schedule: a_min must be > 0 (logarithm undefined), got " +
                      std::to_string(schedule.a_min));
  if (schedule.a_max < schedule.a_min)
    throw ConfigError("swd schedule: a_max < a_min");
  if (schedule.s_final < 1) throw ConfigError("swd schedule: s_final must be >= 1");
  if (schedule.s < 0 || schedule.s > schedule.s_final)
    throw ConfigError("swd schedule: step " + std::to_string(schedule.s) + " outside [0, " +
                      std::to_string(schedule.s_final) + "]");
  if (schedule.s == 0) return schedule.a_min;
  if (schedule.s == schedule.s_final) return schedule.a_max;
  const double t = static_cast<double>(schedule.s) / static_cast<double>(schedule.s_final);
  return schedule.a_min * std::exp(t * std::log(schedule.a_max / schedule.a_min));
}

void swd_penalty_gradient(ModelGraph& graph, const PruneMask& mask, double a, float mu) {
  if (a == 0.0 || mu == 0.0f) return;
  const float c = static_cast<float>(a) * mu;
  if (mask.kind == MaskKind::Unstructured) {
    for (const auto& [pi, flags] : mask.entries) {
      Param& p = graph.params[static_cast<size_t>(pi)];
      p.tensor.ensure_grad();
      for (size_t i = 0; i < flags.size(); ++i)
        if (flags[i]) p.tensor.grad[i] += c * p.tensor.data[i];
    }
    return;
  }

  const std::vector<ChannelSpace> spaces = analyze_channel_spaces(graph);
  for (const ChannelSpace& cs : spaces) {
    const std::vector<uint8_t>* flags = nullptr;
    for (int li : cs.bn_layers) {
      auto it = mask.entries.find(li);
      if (it != mask.entries.end()) {
        flags = &it->second;
        break;
      }
    }
    if (flags == nullptr) continue;
    for (int li : cs.bn_layers) {
      Param& scale = graph.params[static_cast<size_t>(graph.layers[static_cast<size_t>(li)].weight)];
      scale.tensor.ensure_grad();
      for (size_t ch = 0; ch < flags->size(); ++ch)
        if ((*flags)[ch]) scale.tensor.grad[ch] += c * scale.tensor.data[ch];
    }
    for (int li : cs.producer_convs) {
      Param& kernel = graph.params[static_cast<size_t>(graph.layers[static_cast<size_t>(li)].weight)];
      kernel.tensor.ensure_grad();
      const int64_t per_filter = kernel.tensor.size() / kernel.tensor.dim(0);
      for (size_t ch = 0; ch < flags->size(); ++ch) {
        if (!(*flags)[ch]) continue;
        const int64_t base = static_cast<int64_t>(ch) * per_filter;
        for (int64_t i = 0; i < per_filter; ++i)
          kernel.tensor.grad[static_cast<size_t>(base + i)] +=
              c * kernel.tensor.data[static_cast<size_t>(base + i)];
      }
    }
  }
}

namespace {

// selection bitsets for churn accounting, laid out over the mask's map order
std::vector<uint8_t> mask_bits(const PruneMask& mask) {
  std::vector<uint8_t> bits;
  for (const auto& [idx, flags] : mask.entries) bits.insert(bits.end(), flags.begin(), flags.end());
  return bits;
}

double churn_fraction(const std::vector<uint8_t>& prev, const std::vector<uint8_t>& cur,
                      int64_t selected) {
  if (prev.size() != cur.size() || selected == 0) return 0.0;
  int64_t diff = 0;
  for (size_t i = 0; i < cur.size(); ++i) diff += prev[i] != cur[i] ? 1 : 0;
  return static_cast<double>(diff) / (2.0 * static_cast<double>(selected));
}

}  // namespace

TrainHistory train_swd(ModelGraph& graph, const Dataset& train, const Dataset& test,
                       SgdState& opt, SwdConfig& config, const TrainLoopOptions& options,
                       TrainLoopState& state, const EpochHook& epoch_hook) {
  if (config.reselect_interval < 1)
    throw ConfigError("swd: reselect_interval must be >= 1");
  if (config.target.T < 0.0 || config.target.T > 1.0)
    throw ConfigError("swd: prune target T must lie in [0,1]");
  const bool zero_schedule = config.schedule.a_min == 0.0 && config.schedule.a_max == 0.0;
  if (!zero_schedule && config.schedule.a_min > config.schedule.a_max)
    throw ConfigError("swd: a_min must be <= a_max");

  if (zero_schedule) {
    // Degenerate schedule: plain weight-decay training, bit for bit.
    return train_loop(graph, train, test, opt, options, state, {}, epoch_hook);
  }

  PruneMask mask;
  std::vector<uint8_t> prev_bits;
  bool have_mask = false;
  long long selected = 0;

  GradHook hook = [&](long long step) {
    StepInfo info;
    if (!have_mask || (step % config.reselect_interval) == 0) {
      PruneMask next = config.structure == Structure::Unstructured
                           ? select_unstructured(graph, config.target)
                           : select_structured(graph, config.target, /*enforce_survival=*/false);
      std::vector<uint8_t> bits = mask_bits(next);
      selected = next.selected_count();
      info.reselected = true;
      info.churn = have_mask ? churn_fraction(prev_bits, bits, selected) : 0.0;
      prev_bits = std::move(bits);
      mask = std::move(next);
      have_mask = true;
    }
    config.schedule.s = step;
    info.a = swd_coefficient(config.schedule);
    swd_penalty_gradient(graph, mask, info.a, config.mu);
    info.selected = selected;
    return info;
  };

  try {
    return train_loop(graph, train, test, opt, options, state, hook, epoch_hook);
  } catch (const DivergenceError& e) {
    config.schedule.s = e.step;
    throw DivergenceError(std::string(e.what()) + " (a=" +
                              std::to_string(swd_coefficient(config.schedule)) + ")",
                          e.step);
  }
}

RemovalResult final_removal(ModelGraph& graph, const Dataset& test, PruneTarget target,
                            Structure structure, int batch_size) {
  RemovalResult r;
  r.acc_before = evaluate(graph, test, batch_size);
  if (structure == Structure::Unstructured) {
    r.mask = select_unstructured(graph, target);
    r.mask_json = mask_to_json(graph, r.mask);
    apply_soft_mask(graph, r.mask);
  } else {
    r.mask = select_structured(graph, target, /*enforce_survival=*/true);
    r.mask_json = mask_to_json(graph, r.mask);
    graph = hard_prune_structured(graph, r.mask);
  }
  r.acc_after = evaluate(graph, test, batch_size);
  return r;
}

}  // namespace swdnet

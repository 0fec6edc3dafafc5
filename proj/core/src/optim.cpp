#include "swdnet/optim.hpp"

#include <cmath>

#include "swdnet/errors.hpp"

namespace swdnet {

void SgdState::attach(const ModelGraph& graph) {
  velocity.assign(graph.params.size(), {});
  for (size_t i = 0; i < graph.params.size(); ++i)
    velocity[i].assign(graph.params[i].tensor.data.size(), 0.0f);
}

bool role_decays(ParamRole role) {
  return role == ParamRole::ConvKernel || role == ParamRole::DenseWeight ||
         role == ParamRole::BnScale;
}

float lr_at(int epoch, int total_epochs) {
  if (epoch < 0 || epoch >= total_epochs)
    throw ConfigError("lr_at: epoch " + std::to_string(epoch) + " outside [0, " +
                      std::to_string(total_epochs) + ")");
  const int first = (total_epochs + 2) / 3;       // ceil(total/3)
  const int second = (2 * total_epochs + 2) / 3;  // ceil(2*total/3)
  if (epoch < first) return 1e-1f;
  if (epoch < second) return 1e-2f;
  return 1e-3f;
}

void sgd_step(ModelGraph& graph, SgdState& state, long long step_index) {
  if (state.velocity.size() != graph.params.size()) state.attach(graph);
  for (size_t pi = 0; pi < graph.params.size(); ++pi) {
    Param& p = graph.params[pi];
    if (p.tensor.grad.size() != p.tensor.data.size())
      throw UsageError("sgd_step: gradient missing for parameter '" + p.name + "'");
    std::vector<float>& v = state.velocity[pi];
    if (v.size() != p.tensor.data.size()) v.assign(p.tensor.data.size(), 0.0f);
    const bool decay = state.mu > 0.0f && role_decays(p.role);
    for (size_t i = 0; i < p.tensor.data.size(); ++i) {
      if (p.is_frozen(i)) {
        p.tensor.data[i] = 0.0f;
        v[i] = 0.0f;
        continue;
      }
      float g = p.tensor.grad[i];
      if (!std::isfinite(g))
        throw DivergenceError("non-finite gradient in '" + p.name + "' at step " +
                                  std::to_string(step_index),
                              step_index);
      if (decay) g += state.mu * p.tensor.data[i];
      v[i] = state.momentum * v[i] + g;
      p.tensor.data[i] -= state.lr * v[i];
    }
  }
}

}  // namespace swdnet

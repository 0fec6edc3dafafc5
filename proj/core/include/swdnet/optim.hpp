#pragma once

#include <vector>

#include "swdnet/model.hpp"

namespace swdnet {

// SGD with classic momentum. Weight decay (coefficient mu) enters as the
// squared-L2 gradient mu*w on decaying roles; biases and bn shifts are
// exempt. Frozen (soft-masked) entries receive no update and stay at zero,
// with their velocity pinned to zero as well.
struct SgdState {
  float lr = 0.1f;
  float momentum = 0.0f;
  float mu = 0.0f;
  std::vector<std::vector<float>> velocity;

  void attach(const ModelGraph& graph);  // (re)size velocity buffers to match
};

bool role_decays(ParamRole role);  // conv/dense weights and bn scales

// Three-phase schedule: 1e-1 for the first third of training, 1e-2 for the
// second, 1e-3 for the last.
float lr_at(int epoch, int total_epochs);

// v <- momentum*v + (g + mu*w); w <- w - lr*v. Throws DivergenceError on a
// non-finite gradient, tagged with the step index.
void sgd_step(ModelGraph& graph, SgdState& state, long long step_index);

}  // namespace swdnet

#pragma once

#include <cstdint>
#include <string>

#include "swdnet/model.hpp"
#include "swdnet/optim.hpp"
#include "swdnet/swd.hpp"

namespace swdnet {

struct TrainProgress {
  int next_epoch = 0;
  long long step = 0;
};

// Versioned manifest (JSON: shapes, roles, counters, digest) followed by raw
// little-endian float32 blobs per tensor. Save is atomic (tmp + rename);
// load refuses truncated or tampered files and names mismatched tensors.
void checkpoint_save(const ModelGraph& graph, const SgdState& opt, const SwdSchedule& schedule,
                     const TrainProgress& progress, uint64_t seed, const std::string& path);

struct ResumeInfo {
  SwdSchedule schedule;
  TrainProgress progress;
  uint64_t seed = 0;
};

ResumeInfo checkpoint_load(const std::string& path, ModelGraph& graph, SgdState& opt);

}  // namespace swdnet

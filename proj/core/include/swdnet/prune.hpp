#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "swdnet/model.hpp"

namespace swdnet {

// Fraction of total parameters to REMOVE; the papers' "params target" is the
// kept fraction 1 - T.
struct PruneTarget {
  double T = 0.0;
  double kept_fraction() const { return 1.0 - T; }
};

enum class MaskKind { Unstructured, Structured };

// Unstructured: parameter index -> per-element flags (true = selected, i.e.
// member of w*). Structured: batchnorm layer index -> per-channel flags,
// identical across every coupling-group member.
struct PruneMask {
  MaskKind kind = MaskKind::Unstructured;
  std::map<int, std::vector<uint8_t>> entries;

  int64_t selected_count() const;
  bool any() const { return selected_count() > 0; }
};

// A channel space is the set of value slots whose channel dimension must be
// pruned together: batchnorm/relu/pool/avgpool preserve the space, residual
// additions merge the spaces of both addends, a convolution output starts a
// fresh one. Residual coupling groups are precisely the multi-batchnorm
// spaces.
struct ChannelSpace {
  int channels = 0;
  bool selectable = false;             // every member bn scale is prunable
  std::vector<int> bn_layers;          // batchnorm layers normalizing this space
  std::vector<int> producer_convs;     // conv layers producing into it
  std::vector<int> consumer_convs;     // conv layers consuming from it
  std::vector<int> consumer_dense;     // dense layers consuming it (via avgpool)
  std::vector<int> consumer_flatten;   // flatten layers consuming it
};

std::vector<ChannelSpace> analyze_channel_spaces(const ModelGraph& graph);

// Number of weights eligible for unstructured selection (prunable conv and
// dense parameters; bn parameters are excluded).
int64_t prunable_pool_size(const ModelGraph& graph);

// Selects exactly round(T * pool) entries of least magnitude across the
// global pool; ties broken by registry order, then flat index.
PruneMask select_unstructured(const ModelGraph& graph, PruneTarget target);

// Ascending scan over per-channel scores (a coupled channel scores the max
// |gamma| over the group) accumulating the effective removed parameter count
// (filters, bn entries, consumer slices); stops before exceeding T * total.
// With enforce_survival, a selection emptying a layer or group is refused
// (CollapseError); the SWD penalty path passes false since nothing is removed.
PruneMask select_structured(const ModelGraph& graph, PruneTarget target,
                            bool enforce_survival = true);

// Parameters remaining after hard removal under the mask.
int64_t count_params(const ModelGraph& graph, const PruneMask& mask);

// Multiply-accumulates of the post-removal architecture on the given input;
// conv: Cout*Cin*Kh*Kw*H'*W', dense: F*G. Unstructured masks do not change
// the architecture.
int64_t count_macs(const ModelGraph& graph, const PruneMask& mask, const Shape& input_chw);

// Zeroes the selected entries and freezes them: subsequent sgd steps leave
// them exactly zero. Structured selections zero gamma, beta, and the
// producing filter (kernel slice + bias entry) of every selected channel.
void apply_soft_mask(ModelGraph& graph, const PruneMask& mask);

// Physically rebuilds the graph without the selected channels. Output equals
// the soft-masked graph's output within 1e-5. Throws CollapseError (and
// leaves the input untouched) if any layer or group would lose all channels.
ModelGraph hard_prune_structured(const ModelGraph& graph, const PruneMask& mask);

// True iff every conv layer and every coupling group keeps >= 1 unmasked
// channel. Unstructured masks impose no structural constraint.
bool guard_layer_survival(const ModelGraph& graph, const PruneMask& mask);

// {kind, per-tensor arrays of selected indices}, keyed by parameter or
// batchnorm layer name; for audit and replay.
std::string mask_to_json(const ModelGraph& graph, const PruneMask& mask);
PruneMask mask_from_json(const ModelGraph& graph, const std::string& json_text);

}  // namespace swdnet

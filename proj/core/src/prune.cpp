#include "swdnet/prune.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"
#include "swdnet/errors.hpp"

namespace swdnet {

namespace {

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(static_cast<size_t>(n)) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  int find(int x) {
    while (parent[static_cast<size_t>(x)] != x) {
      parent[static_cast<size_t>(x)] = parent[static_cast<size_t>(parent[static_cast<size_t>(x)])];
      x = parent[static_cast<size_t>(x)];
    }
    return x;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[static_cast<size_t>(std::max(a, b))] = std::min(a, b);
  }
};

// space index per value slot + the deterministic space list
struct SpaceMap {
  std::vector<int> value_space;
  std::vector<ChannelSpace> spaces;
};

SpaceMap build_spaces(const ModelGraph& g) {
  UnionFind uf(g.num_values);
  for (const Layer& l : g.layers) {
    switch (l.kind) {
      case LayerKind::BatchNorm:
      case LayerKind::Relu:
      case LayerKind::MaxPool:
      case LayerKind::GlobalAvgPool:
        uf.unite(l.in0, l.out);
        break;
      case LayerKind::Add:
        uf.unite(l.in0, l.in1);
        uf.unite(l.in0, l.out);
        break;
      case LayerKind::Conv2d:
      case LayerKind::Dense:
      case LayerKind::Flatten:
        break;  // output starts a fresh space
    }
  }
  SpaceMap sm;
  sm.value_space.assign(static_cast<size_t>(g.num_values), -1);
  std::map<int, int> root_to_space;
  for (int v = 0; v < g.num_values; ++v) {
    const int root = uf.find(v);
    auto it = root_to_space.find(root);
    if (it == root_to_space.end()) {
      it = root_to_space.emplace(root, static_cast<int>(sm.spaces.size())).first;
      ChannelSpace cs;
      cs.channels = g.value_channels[static_cast<size_t>(root)];
      sm.spaces.push_back(cs);
    }
    sm.value_space[static_cast<size_t>(v)] = it->second;
  }
  for (int li = 0; li < static_cast<int>(g.layers.size()); ++li) {
    const Layer& l = g.layers[static_cast<size_t>(li)];
    const int in_sp = sm.value_space[static_cast<size_t>(l.in0)];
    const int out_sp = sm.value_space[static_cast<size_t>(l.out)];
    switch (l.kind) {
      case LayerKind::BatchNorm:
        sm.spaces[static_cast<size_t>(in_sp)].bn_layers.push_back(li);
        break;
      case LayerKind::Conv2d:
        sm.spaces[static_cast<size_t>(in_sp)].consumer_convs.push_back(li);
        sm.spaces[static_cast<size_t>(out_sp)].producer_convs.push_back(li);
        break;
      case LayerKind::Dense:
        sm.spaces[static_cast<size_t>(in_sp)].consumer_dense.push_back(li);
        break;
      case LayerKind::Flatten:
        sm.spaces[static_cast<size_t>(in_sp)].consumer_flatten.push_back(li);
        break;
      default:
        break;
    }
  }
  for (ChannelSpace& cs : sm.spaces) {
    cs.selectable = !cs.bn_layers.empty();
    for (int li : cs.bn_layers) {
      const Layer& l = g.layers[static_cast<size_t>(li)];
      if (!g.params[static_cast<size_t>(l.weight)].prunable) cs.selectable = false;
    }
  }
  return sm;
}

int popcount_flags(const std::vector<uint8_t>& flags) {
  int n = 0;
  for (uint8_t f : flags) n += f ? 1 : 0;
  return n;
}

void validate_mask(const ModelGraph& g, const PruneMask& mask) {
  if (mask.kind == MaskKind::Unstructured) {
    for (const auto& [pi, flags] : mask.entries) {
      if (pi < 0 || pi >= static_cast<int>(g.params.size()))
        throw UsageError("mask: parameter index " + std::to_string(pi) + " out of range");
      if (static_cast<int64_t>(flags.size()) != g.params[static_cast<size_t>(pi)].tensor.size())
        throw UsageError("mask: flag length mismatch for '" +
                         g.params[static_cast<size_t>(pi)].name + "'");
    }
    return;
  }
  for (const auto& [li, flags] : mask.entries) {
    if (!g.layer_index_valid(li) || g.layers[static_cast<size_t>(li)].kind != LayerKind::BatchNorm)
      throw UsageError("mask: entry " + std::to_string(li) + " is not a batchnorm layer");
    if (static_cast<int>(flags.size()) != g.layers[static_cast<size_t>(li)].channels())
      throw UsageError("mask: channel flag length mismatch for '" +
                       g.layers[static_cast<size_t>(li)].name + "'");
  }
  // coupled members must carry identical masks (all present or none)
  const SpaceMap sm = build_spaces(g);
  for (const ChannelSpace& cs : sm.spaces) {
    size_t with_entry = 0;
    const std::vector<uint8_t>* ref = nullptr;
    for (int li : cs.bn_layers) {
      auto it = mask.entries.find(li);
      if (it == mask.entries.end()) continue;
      ++with_entry;
      if (ref == nullptr)
        ref = &it->second;
      else if (*ref != it->second)
        throw UsageError("mask: coupled batchnorm '" + g.layers[static_cast<size_t>(li)].name +
                         "' disagrees with its group");
    }
    if (with_entry != 0 && with_entry != cs.bn_layers.size())
      throw UsageError("mask: coupling group of '" +
                       g.layers[static_cast<size_t>(cs.bn_layers.front())].name +
                       "' is only partially masked");
  }
}

// per-space kept channel count under a structured mask
std::vector<int> space_keep(const ModelGraph& g, const SpaceMap& sm, const PruneMask& mask) {
  std::vector<int> keep(sm.spaces.size());
  for (size_t si = 0; si < sm.spaces.size(); ++si) keep[si] = sm.spaces[si].channels;
  if (mask.kind != MaskKind::Structured) return keep;
  for (size_t si = 0; si < sm.spaces.size(); ++si) {
    for (int li : sm.spaces[si].bn_layers) {
      auto it = mask.entries.find(li);
      if (it != mask.entries.end()) {
        keep[si] = sm.spaces[si].channels - popcount_flags(it->second);
        break;
      }
    }
  }
  return keep;
}

int64_t count_params_with_keep(const ModelGraph& g, const SpaceMap& sm,
                               const std::vector<int>& keep) {
  int64_t n = 0;
  for (const Layer& l : g.layers) {
    const int in_keep = keep[static_cast<size_t>(sm.value_space[static_cast<size_t>(l.in0)])];
    const int out_keep = keep[static_cast<size_t>(sm.value_space[static_cast<size_t>(l.out)])];
    switch (l.kind) {
      case LayerKind::Conv2d: {
        const Tensor& w = g.params[static_cast<size_t>(l.weight)].tensor;
        n += static_cast<int64_t>(out_keep) * in_keep * w.dim(2) * w.dim(3);
        if (l.bias >= 0) n += out_keep;
        break;
      }
      case LayerKind::BatchNorm:
        n += 2 * static_cast<int64_t>(out_keep);
        break;
      case LayerKind::Dense: {
        const Tensor& w = g.params[static_cast<size_t>(l.weight)].tensor;
        n += static_cast<int64_t>(w.dim(0)) * in_keep;
        if (l.bias >= 0) n += w.dim(0);
        break;
      }
      default:
        break;
    }
  }
  return n;
}

}  // namespace

int64_t PruneMask::selected_count() const {
  int64_t n = 0;
  for (const auto& [idx, flags] : entries) n += popcount_flags(flags);
  return n;
}

std::vector<ChannelSpace> analyze_channel_spaces(const ModelGraph& graph) {
  return build_spaces(graph).spaces;
}

int64_t prunable_pool_size(const ModelGraph& graph) {
  int64_t n = 0;
  for (const Param& p : graph.params)
    if (p.prunable && p.role != ParamRole::BnScale && p.role != ParamRole::BnShift)
      n += p.tensor.size();
  return n;
}

PruneMask select_unstructured(const ModelGraph& graph, PruneTarget target) {
  if (target.T < 0.0 || target.T > 1.0)
    throw ConfigError("prune target T must lie in [0,1], got " + std::to_string(target.T));

  struct Entry {
    float mag;
    int param;
    int64_t flat;
  };
  std::vector<Entry> pool;
  PruneMask mask;
  mask.kind = MaskKind::Unstructured;
  for (int pi = 0; pi < static_cast<int>(graph.params.size()); ++pi) {
    const Param& p = graph.params[static_cast<size_t>(pi)];
    if (!p.prunable || p.role == ParamRole::BnScale || p.role == ParamRole::BnShift) continue;
    mask.entries.emplace(pi, std::vector<uint8_t>(p.tensor.data.size(), 0));
    for (int64_t i = 0; i < p.tensor.size(); ++i)
      pool.push_back({std::fabs(p.tensor.data[static_cast<size_t>(i)]), pi, i});
  }
  if (pool.empty()) throw ConfigError("select_unstructured: graph has no prunable parameters");

  const int64_t k = std::llround(target.T * static_cast<double>(pool.size()));
  if (k <= 0) return mask;
  const auto cmp = [](const Entry& a, const Entry& b) {
    if (a.mag != b.mag) return a.mag < b.mag;
    if (a.param != b.param) return a.param < b.param;
    return a.flat < b.flat;
  };
  if (k < static_cast<int64_t>(pool.size()))
    std::nth_element(pool.begin(), pool.begin() + k, pool.end(), cmp);
  for (int64_t i = 0; i < k; ++i)
    mask.entries[pool[static_cast<size_t>(i)].param][static_cast<size_t>(pool[static_cast<size_t>(i)].flat)] = 1;
  return mask;
}

PruneMask select_structured(const ModelGraph& graph, PruneTarget target, bool enforce_survival) {
  if (target.T < 0.0 || target.T > 1.0)
    throw ConfigError("prune target T must lie in [0,1], got " + std::to_string(target.T));
  const SpaceMap sm = build_spaces(graph);
  bool any_selectable = false;
  for (const ChannelSpace& cs : sm.spaces) any_selectable |= cs.selectable;
  if (!any_selectable)
    throw ConfigError("select_structured: graph has no prunable batchnorm scales");

  PruneMask mask;
  mask.kind = MaskKind::Structured;
  for (size_t si = 0; si < sm.spaces.size(); ++si)
    if (sm.spaces[si].selectable)
      for (int li : sm.spaces[si].bn_layers)
        mask.entries.emplace(li, std::vector<uint8_t>(static_cast<size_t>(sm.spaces[si].channels), 0));

  struct Cand {
    double score;
    int space;
    int channel;
  };
  std::vector<Cand> cands;
  for (int si = 0; si < static_cast<int>(sm.spaces.size()); ++si) {
    const ChannelSpace& cs = sm.spaces[static_cast<size_t>(si)];
    if (!cs.selectable) continue;
    for (int ch = 0; ch < cs.channels; ++ch) {
      double score = 0.0;
      for (int li : cs.bn_layers) {
        const Layer& l = graph.layers[static_cast<size_t>(li)];
        const float gamma = graph.params[static_cast<size_t>(l.weight)].tensor.data[static_cast<size_t>(ch)];
        score = std::max(score, static_cast<double>(std::fabs(gamma)));
      }
      cands.push_back({score, si, ch});
    }
  }
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    if (a.score != b.score) return a.score < b.score;
    if (a.space != b.space) return a.space < b.space;
    return a.channel < b.channel;
  });

  const int64_t total = count_params_with_keep(graph, sm, space_keep(graph, sm, PruneMask{}));
  const double budget = target.T * static_cast<double>(total);

  std::vector<int> keep = space_keep(graph, sm, mask);
  for (const Cand& c : cands) {
    for (int li : sm.spaces[static_cast<size_t>(c.space)].bn_layers)
      mask.entries[li][static_cast<size_t>(c.channel)] = 1;
    keep[static_cast<size_t>(c.space)] -= 1;
    const int64_t removed = total - count_params_with_keep(graph, sm, keep);
    if (static_cast<double>(removed) > budget + 1e-9) {
      for (int li : sm.spaces[static_cast<size_t>(c.space)].bn_layers)
        mask.entries[li][static_cast<size_t>(c.channel)] = 0;
      keep[static_cast<size_t>(c.space)] += 1;
      break;
    }
  }

  if (enforce_survival && !guard_layer_survival(graph, mask)) {
    for (size_t si = 0; si < sm.spaces.size(); ++si)
      if (sm.spaces[si].selectable && keep[si] == 0) {
        const Layer& l = graph.layers[static_cast<size_t>(sm.spaces[si].bn_layers.front())];
        throw CollapseError("selection at T=" + std::to_string(target.T) +
                            " empties every channel of '" + l.name + "'");
      }
    throw CollapseError("selection empties a layer");
  }
  return mask;
}

int64_t count_params(const ModelGraph& graph, const PruneMask& mask) {
  validate_mask(graph, mask);
  if (mask.kind == MaskKind::Unstructured) return graph.total_params() - mask.selected_count();
  const SpaceMap sm = build_spaces(graph);
  return count_params_with_keep(graph, sm, space_keep(graph, sm, mask));
}

int64_t count_macs(const ModelGraph& graph, const PruneMask& mask, const Shape& input_chw) {
  if (input_chw.size() != 3) throw ConfigError("count_macs: input shape must be {C,H,W}");
  validate_mask(graph, mask);
  const SpaceMap sm = build_spaces(graph);
  std::vector<int> keep = mask.kind == MaskKind::Structured
                              ? space_keep(graph, sm, mask)
                              : space_keep(graph, sm, PruneMask{});

  std::vector<std::pair<int, int>> hw(static_cast<size_t>(graph.num_values), {0, 0});
  hw[0] = {input_chw[1], input_chw[2]};
  int64_t macs = 0;
  for (const Layer& l : graph.layers) {
    const auto [h, w] = hw[static_cast<size_t>(l.in0)];
    const int in_keep = keep[static_cast<size_t>(sm.value_space[static_cast<size_t>(l.in0)])];
    const int out_keep = keep[static_cast<size_t>(sm.value_space[static_cast<size_t>(l.out)])];
    switch (l.kind) {
      case LayerKind::Conv2d: {
        const int ho = (h + 2 * l.padding - l.ksize) / l.stride + 1;
        const int wo = (w + 2 * l.padding - l.ksize) / l.stride + 1;
        macs += static_cast<int64_t>(out_keep) * in_keep * l.ksize * l.ksize * ho * wo;
        hw[static_cast<size_t>(l.out)] = {ho, wo};
        break;
      }
      case LayerKind::MaxPool: {
        const int ho = (h - l.ksize) / l.stride + 1;
        const int wo = (w - l.ksize) / l.stride + 1;
        hw[static_cast<size_t>(l.out)] = {ho, wo};
        break;
      }
      case LayerKind::Dense: {
        const Tensor& wt = graph.params[static_cast<size_t>(l.weight)].tensor;
        macs += static_cast<int64_t>(wt.dim(0)) * in_keep;
        hw[static_cast<size_t>(l.out)] = {1, 1};
        break;
      }
      case LayerKind::GlobalAvgPool:
      case LayerKind::Flatten:
        hw[static_cast<size_t>(l.out)] = {1, 1};
        break;
      case LayerKind::BatchNorm:
      case LayerKind::Relu:
      case LayerKind::Add:
        hw[static_cast<size_t>(l.out)] = {h, w};
        break;
    }
  }
  return macs;
}

void apply_soft_mask(ModelGraph& graph, const PruneMask& mask) {
  validate_mask(graph, mask);
  if (mask.kind == MaskKind::Unstructured) {
    for (const auto& [pi, flags] : mask.entries) {
      Param& p = graph.params[static_cast<size_t>(pi)];
      if (popcount_flags(flags) == 0) continue;
      if (p.frozen.empty()) p.frozen.assign(p.tensor.data.size(), 0);
      for (size_t i = 0; i < flags.size(); ++i)
        if (flags[i]) {
          p.tensor.data[i] = 0.0f;
          p.frozen[i] = 1;
        }
    }
    return;
  }

  const SpaceMap sm = build_spaces(graph);
  auto freeze = [](Param& p, size_t i) {
    if (p.frozen.empty()) p.frozen.assign(p.tensor.data.size(), 0);
    p.tensor.data[i] = 0.0f;
    p.frozen[i] = 1;
  };
  for (size_t si = 0; si < sm.spaces.size(); ++si) {
    const ChannelSpace& cs = sm.spaces[si];
    const std::vector<uint8_t>* flags = nullptr;
    for (int li : cs.bn_layers) {
      auto it = mask.entries.find(li);
      if (it != mask.entries.end()) {
        flags = &it->second;
        break;
      }
    }
    if (flags == nullptr || popcount_flags(*flags) == 0) continue;
    for (int li : cs.bn_layers) {
      const Layer& l = graph.layers[static_cast<size_t>(li)];
      Param& scale = graph.params[static_cast<size_t>(l.weight)];
      Param& shift = graph.params[static_cast<size_t>(l.bias)];
      for (size_t ch = 0; ch < flags->size(); ++ch)
        if ((*flags)[ch]) {
          freeze(scale, ch);
          freeze(shift, ch);
        }
    }
    for (int li : cs.producer_convs) {
      const Layer& l = graph.layers[static_cast<size_t>(li)];
      Param& kernel = graph.params[static_cast<size_t>(l.weight)];
      const int64_t per_filter = kernel.tensor.size() / kernel.tensor.dim(0);
      for (size_t ch = 0; ch < flags->size(); ++ch)
        if ((*flags)[ch])
          for (int64_t i = 0; i < per_filter; ++i)
            freeze(kernel, static_cast<size_t>(static_cast<int64_t>(ch) * per_filter + i));
      if (l.bias >= 0) {
        Param& bias = graph.params[static_cast<size_t>(l.bias)];
        for (size_t ch = 0; ch < flags->size(); ++ch)
          if ((*flags)[ch]) freeze(bias, ch);
      }
    }
  }
}

bool guard_layer_survival(const ModelGraph& graph, const PruneMask& mask) {
  if (mask.kind != MaskKind::Structured) return true;
  validate_mask(graph, mask);
  const SpaceMap sm = build_spaces(graph);
  const std::vector<int> keep = space_keep(graph, sm, mask);
  for (size_t si = 0; si < sm.spaces.size(); ++si)
    if (keep[si] == 0) return false;
  return true;
}

ModelGraph hard_prune_structured(const ModelGraph& graph, const PruneMask& mask) {
  if (mask.kind != MaskKind::Structured)
    throw UsageError("hard_prune_structured: mask is not structured");
  validate_mask(graph, mask);
  const SpaceMap sm = build_spaces(graph);
  const std::vector<int> keep_count = space_keep(graph, sm, mask);
  for (size_t si = 0; si < sm.spaces.size(); ++si) {
    if (keep_count[si] > 0) continue;
    std::string victim = "space " + std::to_string(si);
    if (!sm.spaces[si].bn_layers.empty())
      victim = graph.layers[static_cast<size_t>(sm.spaces[si].bn_layers.front())].name;
    else if (!sm.spaces[si].producer_convs.empty())
      victim = graph.layers[static_cast<size_t>(sm.spaces[si].producer_convs.front())].name;
    throw CollapseError("hard prune would remove every channel of '" + victim + "'");
  }

  // per-space kept channel index lists
  std::vector<std::vector<int>> keep(sm.spaces.size());
  for (size_t si = 0; si < sm.spaces.size(); ++si) {
    const ChannelSpace& cs = sm.spaces[si];
    const std::vector<uint8_t>* flags = nullptr;
    for (int li : cs.bn_layers) {
      auto it = mask.entries.find(li);
      if (it != mask.entries.end()) {
        flags = &it->second;
        break;
      }
    }
    keep[si].reserve(static_cast<size_t>(cs.channels));
    for (int ch = 0; ch < cs.channels; ++ch)
      if (flags == nullptr || !(*flags)[static_cast<size_t>(ch)]) keep[si].push_back(ch);
    if (static_cast<int>(keep[si].size()) != cs.channels && !cs.consumer_flatten.empty())
      throw ConfigError("hard_prune_structured: pruned channels feed a flatten layer; "
                        "only avgpool-headed graphs support structured removal");
  }

  ModelGraph out = graph;
  auto filter1d = [](const std::vector<float>& src, const std::vector<int>& idx) {
    std::vector<float> dst;
    dst.reserve(idx.size());
    for (int i : idx) dst.push_back(src[static_cast<size_t>(i)]);
    return dst;
  };
  auto filter_flags = [](const std::vector<uint8_t>& src, const std::vector<int>& idx) {
    if (src.empty()) return std::vector<uint8_t>{};
    std::vector<uint8_t> dst;
    dst.reserve(idx.size());
    for (int i : idx) dst.push_back(src[static_cast<size_t>(i)]);
    return dst;
  };

  for (int li = 0; li < static_cast<int>(out.layers.size()); ++li) {
    Layer& l = out.layers[static_cast<size_t>(li)];
    const std::vector<int>& in_k = keep[static_cast<size_t>(sm.value_space[static_cast<size_t>(l.in0)])];
    const std::vector<int>& out_k = keep[static_cast<size_t>(sm.value_space[static_cast<size_t>(l.out)])];
    switch (l.kind) {
      case LayerKind::Conv2d: {
        Param& w = out.params[static_cast<size_t>(l.weight)];
        const int cin = w.tensor.dim(1), kh = w.tensor.dim(2), kw = w.tensor.dim(3);
        const int64_t khw = static_cast<int64_t>(kh) * kw;
        Tensor nw({static_cast<int>(out_k.size()), static_cast<int>(in_k.size()), kh, kw});
        std::vector<uint8_t> nfrozen;
        if (!w.frozen.empty()) nfrozen.resize(nw.data.size(), 0);
        int64_t o = 0;
        for (int co : out_k)
          for (int ci : in_k)
            for (int64_t i = 0; i < khw; ++i, ++o) {
              const int64_t src = (static_cast<int64_t>(co) * cin + ci) * khw + i;
              nw.data[static_cast<size_t>(o)] = w.tensor.data[static_cast<size_t>(src)];
              if (!w.frozen.empty()) nfrozen[static_cast<size_t>(o)] = w.frozen[static_cast<size_t>(src)];
            }
        w.tensor = std::move(nw);
        w.frozen = std::move(nfrozen);
        if (l.bias >= 0) {
          Param& b = out.params[static_cast<size_t>(l.bias)];
          b.tensor = Tensor({static_cast<int>(out_k.size())}, filter1d(b.tensor.data, out_k));
          b.frozen = filter_flags(b.frozen, out_k);
        }
        break;
      }
      case LayerKind::BatchNorm: {
        Param& scale = out.params[static_cast<size_t>(l.weight)];
        Param& shift = out.params[static_cast<size_t>(l.bias)];
        scale.tensor = Tensor({static_cast<int>(out_k.size())}, filter1d(scale.tensor.data, out_k));
        scale.frozen = filter_flags(scale.frozen, out_k);
        shift.tensor = Tensor({static_cast<int>(out_k.size())}, filter1d(shift.tensor.data, out_k));
        shift.frozen = filter_flags(shift.frozen, out_k);
        l.running_mean = filter1d(l.running_mean, out_k);
        l.running_var = filter1d(l.running_var, out_k);
        break;
      }
      case LayerKind::Dense: {
        Param& w = out.params[static_cast<size_t>(l.weight)];
        const int g_out = w.tensor.dim(0), f = w.tensor.dim(1);
        if (static_cast<int>(in_k.size()) != f) {
          Tensor nw({g_out, static_cast<int>(in_k.size())});
          std::vector<uint8_t> nfrozen;
          if (!w.frozen.empty()) nfrozen.resize(nw.data.size(), 0);
          int64_t o = 0;
          for (int gr = 0; gr < g_out; ++gr)
            for (int ci : in_k) {
              const int64_t src = static_cast<int64_t>(gr) * f + ci;
              nw.data[static_cast<size_t>(o)] = w.tensor.data[static_cast<size_t>(src)];
              if (!w.frozen.empty()) nfrozen[static_cast<size_t>(o)] = w.frozen[static_cast<size_t>(src)];
              ++o;
            }
          w.tensor = std::move(nw);
          w.frozen = std::move(nfrozen);
        }
        break;
      }
      default:
        break;
    }
  }
  for (int v = 0; v < out.num_values; ++v)
    out.value_channels[static_cast<size_t>(v)] =
        static_cast<int>(keep[static_cast<size_t>(sm.value_space[static_cast<size_t>(v)])].size());
  for (CouplingGroup& grp : out.residual_groups)
    if (!grp.member_bn_layers.empty())
      grp.channel_count =
          out.layers[static_cast<size_t>(grp.member_bn_layers.front())].channels();
  return out;
}

std::string mask_to_json(const ModelGraph& graph, const PruneMask& mask) {
  validate_mask(graph, mask);
  nlohmann::json j;
  j["kind"] = mask.kind == MaskKind::Unstructured ? "unstructured" : "structured";
  nlohmann::json sel = nlohmann::json::object();
  for (const auto& [idx, flags] : mask.entries) {
    std::vector<int64_t> on;
    for (size_t i = 0; i < flags.size(); ++i)
      if (flags[i]) on.push_back(static_cast<int64_t>(i));
    const std::string name = mask.kind == MaskKind::Unstructured
                                 ? graph.params[static_cast<size_t>(idx)].name
                                 : graph.layers[static_cast<size_t>(idx)].name;
    sel[name] = on;
  }
  j["selected"] = sel;
  return j.dump(2);
}

PruneMask mask_from_json(const ModelGraph& graph, const std::string& json_text) {
  nlohmann::json j = nlohmann::json::parse(json_text);
  PruneMask mask;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "unstructured")
    mask.kind = MaskKind::Unstructured;
  else if (kind == "structured")
    mask.kind = MaskKind::Structured;
  else
    throw DataError("mask json: unknown kind '" + kind + "'");

  for (const auto& [name, indices] : j.at("selected").items()) {
    int idx = -1;
    size_t len = 0;
    if (mask.kind == MaskKind::Unstructured) {
      for (int pi = 0; pi < static_cast<int>(graph.params.size()); ++pi)
        if (graph.params[static_cast<size_t>(pi)].name == name) {
          idx = pi;
          len = graph.params[static_cast<size_t>(pi)].tensor.data.size();
          break;
        }
      if (idx < 0) throw DataError("mask json: unknown parameter '" + name + "'");
    } else {
      for (int li = 0; li < static_cast<int>(graph.layers.size()); ++li)
        if (graph.layers[static_cast<size_t>(li)].kind == LayerKind::BatchNorm &&
            graph.layers[static_cast<size_t>(li)].name == name) {
          idx = li;
          len = static_cast<size_t>(graph.layers[static_cast<size_t>(li)].channels());
          break;
        }
      if (idx < 0) throw DataError("mask json: unknown batchnorm layer '" + name + "'");
    }
    std::vector<uint8_t> flags(len, 0);
    for (const auto& iv : indices) {
      const int64_t i = iv.get<int64_t>();
      if (i < 0 || i >= static_cast<int64_t>(len))
        throw DataError("mask json: index " + std::to_string(i) + " out of range for '" + name + "'");
      flags[static_cast<size_t>(i)] = 1;
    }
    mask.entries.emplace(idx, std::move(flags));
  }
  validate_mask(graph, mask);
  return mask;
}

}  // namespace swdnet

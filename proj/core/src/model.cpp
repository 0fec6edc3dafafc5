#include "swdnet/model.hpp"

#include <cmath>

#include "swdnet/errors.hpp"
#include "swdnet/rng.hpp"

namespace swdnet {

const char* role_name(ParamRole role) {
  switch (role) {
    case ParamRole::ConvKernel: return "conv_kernel";
    case ParamRole::ConvBias: return "conv_bias";
    case ParamRole::BnScale: return "bn_scale";
    case ParamRole::BnShift: return "bn_shift";
    case ParamRole::DenseWeight: return "dense_weight";
    case ParamRole::DenseBias: return "dense_bias";
  }
  return "?";
}

ParamRole role_from_name(const std::string& name) {
  if (name == "conv_kernel") return ParamRole::ConvKernel;
  if (name == "conv_bias") return ParamRole::ConvBias;
  if (name == "bn_scale") return ParamRole::BnScale;
  if (name == "bn_shift") return ParamRole::BnShift;
  if (name == "dense_weight") return ParamRole::DenseWeight;
  if (name == "dense_bias") return ParamRole::DenseBias;
  throw ConfigError("unknown parameter role '" + name + "'");
}

int64_t ModelGraph::total_params() const {
  int64_t n = 0;
  for (const Param& p : params) n += p.tensor.size();
  return n;
}

void ModelGraph::zero_grads() {
  for (Param& p : params) p.tensor.zero_grad();
}

GraphBuilder::GraphBuilder(Shape input_chw) {
  if (input_chw.size() != 3) throw ConfigError("GraphBuilder: input shape must be {C,H,W}");
  g_.input_shape = input_chw;
  g_.num_values = 1;
  g_.value_channels.push_back(input_chw[0]);
}

int GraphBuilder::fresh_value(int channels) {
  g_.value_channels.push_back(channels);
  return g_.num_values++;
}

int GraphBuilder::add_param(const std::string& name, Shape shape, ParamRole role, bool prunable) {
  Param p;
  p.name = name;
  p.tensor = Tensor(std::move(shape));
  p.role = role;
  p.prunable = prunable;
  g_.params.push_back(std::move(p));
  return static_cast<int>(g_.params.size()) - 1;
}

int GraphBuilder::conv2d(const std::string& name, int in, int out_channels, int ksize, int stride,
                         int padding, bool with_bias, bool prunable_kernel) {
  const int cin = g_.value_channels[static_cast<size_t>(in)];
  Layer l;
  l.kind = LayerKind::Conv2d;
  l.name = name;
  l.in0 = in;
  l.stride = stride;
  l.padding = padding;
  l.ksize = ksize;
  l.weight = add_param(name + ".weight", {out_channels, cin, ksize, ksize},
                       ParamRole::ConvKernel, prunable_kernel);
  if (with_bias)
    l.bias = add_param(name + ".bias", {out_channels}, ParamRole::ConvBias, prunable_kernel);
  l.out = fresh_value(out_channels);
  g_.layers.push_back(std::move(l));
  return g_.layers.back().out;
}

int GraphBuilder::batchnorm(const std::string& name, int in, bool prunable_scale) {
  const int c = g_.value_channels[static_cast<size_t>(in)];
  Layer l;
  l.kind = LayerKind::BatchNorm;
  l.name = name;
  l.in0 = in;
  l.weight = add_param(name + ".scale", {c}, ParamRole::BnScale, prunable_scale);
  l.bias = add_param(name + ".shift", {c}, ParamRole::BnShift, false);
  l.running_mean.assign(static_cast<size_t>(c), 0.0f);
  l.running_var.assign(static_cast<size_t>(c), 1.0f);
  l.out = fresh_value(c);
  g_.layers.push_back(std::move(l));
  return g_.layers.back().out;
}

int GraphBuilder::relu(int in) {
  Layer l;
  l.kind = LayerKind::Relu;
  l.name = "relu";
  l.in0 = in;
  l.out = fresh_value(g_.value_channels[static_cast<size_t>(in)]);
  g_.layers.push_back(std::move(l));
  return g_.layers.back().out;
}

int GraphBuilder::maxpool2d(int in, int ksize, int stride) {
  Layer l;
  l.kind = LayerKind::MaxPool;
  l.name = "maxpool";
  l.in0 = in;
  l.ksize = ksize;
  l.stride = stride;
  l.out = fresh_value(g_.value_channels[static_cast<size_t>(in)]);
  g_.layers.push_back(std::move(l));
  return g_.layers.back().out;
}

int GraphBuilder::global_avgpool(int in) {
  Layer l;
  l.kind = LayerKind::GlobalAvgPool;
  l.name = "global_avgpool";
  l.in0 = in;
  l.out = fresh_value(g_.value_channels[static_cast<size_t>(in)]);
  g_.layers.push_back(std::move(l));
  return g_.layers.back().out;
}

int GraphBuilder::flatten(int in, int feature_count) {
  Layer l;
  l.kind = LayerKind::Flatten;
  l.name = "flatten";
  l.in0 = in;
  l.out = fresh_value(feature_count);
  g_.layers.push_back(std::move(l));
  return g_.layers.back().out;
}

int GraphBuilder::dense(const std::string& name, int in, int in_features, int out_features,
                        bool with_bias, bool prunable_weight) {
  Layer l;
  l.kind = LayerKind::Dense;
  l.name = name;
  l.in0 = in;
  l.weight = add_param(name + ".weight", {out_features, in_features}, ParamRole::DenseWeight,
                       prunable_weight);
  if (with_bias)
    l.bias = add_param(name + ".bias", {out_features}, ParamRole::DenseBias, prunable_weight);
  l.out = fresh_value(out_features);
  g_.layers.push_back(std::move(l));
  return g_.layers.back().out;
}

int GraphBuilder::add(int a, int b) {
  if (g_.value_channels[static_cast<size_t>(a)] != g_.value_channels[static_cast<size_t>(b)])
    throw ConfigError("add: channel mismatch between residual branches");
  Layer l;
  l.kind = LayerKind::Add;
  l.name = "add";
  l.in0 = a;
  l.in1 = b;
  l.out = fresh_value(g_.value_channels[static_cast<size_t>(a)]);
  g_.layers.push_back(std::move(l));
  return g_.layers.back().out;
}

void GraphBuilder::couple(const std::vector<int>& bn_layer_indices) {
  if (bn_layer_indices.empty()) return;
  CouplingGroup grp;
  int channels = -1;
  for (int li : bn_layer_indices) {
    const Layer& l = g_.layers[static_cast<size_t>(li)];
    if (l.kind != LayerKind::BatchNorm)
      throw ConfigError("couple: layer " + std::to_string(li) + " is not a batchnorm");
    if (channels < 0) channels = l.channels();
    if (l.channels() != channels)
      throw ConfigError("couple: members disagree on channel count");
    grp.member_bn_layers.push_back(li);
  }
  grp.channel_count = channels;
  g_.residual_groups.push_back(std::move(grp));
}

ModelGraph GraphBuilder::finish(const std::string& arch, int num_classes) {
  g_.arch = arch;
  g_.num_classes = num_classes;
  return std::move(g_);
}

ModelGraph build_lenet5(int num_classes) {
  if (num_classes < 2) throw ConfigError("build_lenet5: num_classes must be >= 2");
  GraphBuilder b({1, 28, 28});
  int v = b.input_value();
  v = b.conv2d("conv1", v, 6, 5, 1, 2, /*bias=*/true);
  v = b.relu(v);
  v = b.maxpool2d(v, 2, 2);
  v = b.conv2d("conv2", v, 16, 5, 1, 0, /*bias=*/true);
  v = b.relu(v);
  v = b.maxpool2d(v, 2, 2);
  v = b.flatten(v, 16 * 5 * 5);
  v = b.dense("fc1", v, 400, 120);
  v = b.relu(v);
  v = b.dense("fc2", v, 120, 84);
  v = b.relu(v);
  v = b.dense("fc3", v, 84, num_classes);
  ModelGraph g = b.finish("lenet5", num_classes);
  return g;
}

ModelGraph build_mini_resnet(int depth_blocks, int base_width, int num_classes,
                             int input_channels) {
  if (depth_blocks < 1) throw ConfigError("build_mini_resnet: depth_blocks must be >= 1");
  if (base_width < 1) throw ConfigError("build_mini_resnet: base_width must be >= 1");
  if (num_classes < 2) throw ConfigError("build_mini_resnet: num_classes must be >= 2");

  GraphBuilder b({input_channels, 32, 32});
  int v = b.input_value();
  v = b.conv2d("stem.conv", v, base_width, 3, 1, 1, /*bias=*/false);
  v = b.batchnorm("stem.bn", v, /*prunable=*/true);
  int trunk_bn = b.last_layer();
  v = b.relu(v);

  // Per stage, one coupling group accumulates the entry bn (stem or the
  // projection bn) plus every block's second and post-addition bn.
  std::vector<int> group = {trunk_bn};
  const int widths[3] = {base_width, 2 * base_width, 4 * base_width};
  for (int stage = 0; stage < 3; ++stage) {
    const int w = widths[stage];
    for (int blk = 0; blk < depth_blocks; ++blk) {
      const bool transition = (stage > 0 && blk == 0);
      const int stride = transition ? 2 : 1;
      const std::string tag =
          "stage" + std::to_string(stage + 1) + ".block" + std::to_string(blk + 1);

      int skip = v;
      if (transition) {
        // Projection skip starts a fresh coupling group for the new width.
        b.couple(group);
        group.clear();
        skip = b.conv2d(tag + ".proj", v, w, 1, 2, 0, /*bias=*/false);
        skip = b.batchnorm(tag + ".proj_bn", skip, /*prunable=*/true);
        group.push_back(b.last_layer());
      }

      int m = b.conv2d(tag + ".conv1", v, w, 3, stride, 1, /*bias=*/false);
      m = b.batchnorm(tag + ".bn1", m, /*prunable=*/true);
      m = b.relu(m);
      m = b.conv2d(tag + ".conv2", m, w, 3, 1, 1, /*bias=*/false);
      m = b.batchnorm(tag + ".bn2", m, /*prunable=*/true);
      group.push_back(b.last_layer());

      v = b.add(m, skip);
      v = b.batchnorm(tag + ".post_bn", v, /*prunable=*/true);
      group.push_back(b.last_layer());
      v = b.relu(v);
    }
  }
  b.couple(group);

  v = b.global_avgpool(v);
  v = b.dense("head", v, 4 * base_width, num_classes);
  ModelGraph g = b.finish("mini_resnet", num_classes);
  g.depth_blocks = depth_blocks;
  g.base_width = base_width;
  return g;
}

void init_parameters(ModelGraph& graph, uint64_t seed) {
  Rng rng(seed);
  for (Param& p : graph.params) {
    p.frozen.clear();
    p.tensor.grad.clear();
    switch (p.role) {
      case ParamRole::ConvKernel: {
        const int fan_in = p.tensor.dim(1) * p.tensor.dim(2) * p.tensor.dim(3);
        const double bound = std::sqrt(6.0 / fan_in);
        for (float& w : p.tensor.data) w = static_cast<float>(rng.uniform(-bound, bound));
        break;
      }
      case ParamRole::DenseWeight: {
        const int fan_in = p.tensor.dim(1);
        const double bound = std::sqrt(6.0 / fan_in);
        for (float& w : p.tensor.data) w = static_cast<float>(rng.uniform(-bound, bound));
        break;
      }
      case ParamRole::BnScale:
        std::fill(p.tensor.data.begin(), p.tensor.data.end(), 1.0f);
        break;
      case ParamRole::ConvBias:
      case ParamRole::BnShift:
      case ParamRole::DenseBias:
        std::fill(p.tensor.data.begin(), p.tensor.data.end(), 0.0f);
        break;
    }
  }
  for (Layer& l : graph.layers) {
    if (l.kind == LayerKind::BatchNorm) {
      std::fill(l.running_mean.begin(), l.running_mean.end(), 0.0f);
      std::fill(l.running_var.begin(), l.running_var.end(), 1.0f);
    }
  }
}

Tape::Id forward(ModelGraph& graph, Tape& tape, Tape::Id input_id, bool train) {
  std::vector<Tape::Id> values(static_cast<size_t>(graph.num_values), -1);
  values[0] = input_id;
  Tape::Id out = input_id;
  for (Layer& l : graph.layers) {
    const Tape::Id a = values[static_cast<size_t>(l.in0)];
    switch (l.kind) {
      case LayerKind::Conv2d: {
        Tape::Id k = tape.leaf(&graph.params[static_cast<size_t>(l.weight)].tensor);
        Tape::Id bias = l.bias >= 0
                            ? tape.leaf(&graph.params[static_cast<size_t>(l.bias)].tensor)
                            : -1;
        out = tape.conv2d(a, k, bias, l.stride, l.padding);
        break;
      }
      case LayerKind::BatchNorm: {
        Tape::Id g = tape.leaf(&graph.params[static_cast<size_t>(l.weight)].tensor);
        Tape::Id s = tape.leaf(&graph.params[static_cast<size_t>(l.bias)].tensor);
        out = tape.batchnorm(a, g, s, &l.running_mean, &l.running_var, l.eps, l.bn_momentum,
                             train);
        break;
      }
      case LayerKind::Relu:
        out = tape.relu(a);
        break;
      case LayerKind::MaxPool:
        out = tape.maxpool2d(a, l.ksize, l.stride);
        break;
      case LayerKind::GlobalAvgPool:
        out = tape.global_avgpool(a);
        break;
      case LayerKind::Flatten:
        out = tape.flatten(a);
        break;
      case LayerKind::Dense: {
        Tape::Id w = tape.leaf(&graph.params[static_cast<size_t>(l.weight)].tensor);
        Tape::Id bias = l.bias >= 0
                            ? tape.leaf(&graph.params[static_cast<size_t>(l.bias)].tensor)
                            : -1;
        out = tape.dense(a, w, bias);
        break;
      }
      case LayerKind::Add:
        out = tape.add(a, values[static_cast<size_t>(l.in1)]);
        break;
    }
    values[static_cast<size_t>(l.out)] = out;
  }
  return out;
}

Tensor forward_values(ModelGraph& graph, const Tensor& input, bool train) {
  Tape tape;
  Tape::Id in = tape.input(input);
  Tape::Id out = forward(graph, tape, in, train);
  return tape.value(out);
}

}  // namespace swdnet

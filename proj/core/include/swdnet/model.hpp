#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "swdnet/autograd.hpp"
#include "swdnet/tensor.hpp"

namespace swdnet {

enum class ParamRole { ConvKernel, ConvBias, BnScale, BnShift, DenseWeight, DenseBias };

const char* role_name(ParamRole role);
ParamRole role_from_name(const std::string& name);

struct Param {
  std::string name;
  Tensor tensor;
  ParamRole role;
  bool prunable = false;
  std::vector<uint8_t> frozen;  // empty, or one flag per element (1 = pinned at zero)

  bool is_frozen(size_t i) const { return !frozen.empty() && frozen[i]; }
};

enum class LayerKind { Conv2d, BatchNorm, Relu, MaxPool, GlobalAvgPool, Dense, Add, Flatten };

struct Layer {
  LayerKind kind;
  std::string name;
  int in0 = -1, in1 = -1, out = -1;  // value-slot indices
  int weight = -1, bias = -1;        // param indices; batchnorm uses weight=scale, bias=shift
  int stride = 1, padding = 0, ksize = 0;
  // batchnorm state
  std::vector<float> running_mean, running_var;
  float eps = 1e-5f;
  float bn_momentum = 0.1f;

  int channels() const { return static_cast<int>(running_mean.size()); }
};

// Batchnorm layers around a residual addition whose channel masks must match.
struct CouplingGroup {
  std::vector<int> member_bn_layers;
  int channel_count = 0;
};

struct ModelGraph {
  std::string arch;  // "lenet5" | "mini_resnet" | "custom"
  int depth_blocks = 0, base_width = 0;
  int num_classes = 0;
  Shape input_shape;  // {C, H, W}
  int num_values = 0;
  std::vector<int> value_channels;  // channel count per value slot
  std::vector<Layer> layers;        // topological order
  std::vector<Param> params;
  std::vector<CouplingGroup> residual_groups;

  int64_t total_params() const;
  void zero_grads();
  bool layer_index_valid(int i) const {
    return i >= 0 && i < static_cast<int>(layers.size());
  }
};

// Incremental graph assembly; used by the model builders and by test fixtures.
// Values are symbolic slots; channel counts are tracked for pruning analysis.
class GraphBuilder {
 public:
  explicit GraphBuilder(Shape input_chw);

  int input_value() const { return 0; }

  int conv2d(const std::string& name, int in, int out_channels, int ksize, int stride,
             int padding, bool with_bias, bool prunable_kernel = true);
  int batchnorm(const std::string& name, int in, bool prunable_scale);
  int relu(int in);
  int maxpool2d(int in, int ksize, int stride);
  int global_avgpool(int in);
  int flatten(int in, int feature_count);
  int dense(const std::string& name, int in, int in_features, int out_features,
            bool with_bias = true, bool prunable_weight = true);
  int add(int a, int b);

  // Explicit residual coupling; all members must share a channel count.
  void couple(const std::vector<int>& bn_layer_indices);

  // Index of the most recently added layer.
  int last_layer() const { return static_cast<int>(g_.layers.size()) - 1; }

  ModelGraph finish(const std::string& arch, int num_classes);

 private:
  int fresh_value(int channels);
  int add_param(const std::string& name, Shape shape, ParamRole role, bool prunable);

  ModelGraph g_;
};

// conv(1->6,5x5,pad 2) relu pool2 conv(6->16,5x5) relu pool2
// dense(400->120) relu dense(120->84) relu dense(84->classes)
ModelGraph build_lenet5(int num_classes);

// Stem conv+bn+relu, then three stages of widths {w, 2w, 4w} with depth_blocks
// residual blocks each; block = conv-bn-relu-conv-bn, add, post-addition bn,
// relu. Stage transitions downsample by stride 2 with a 1x1 projection skip.
ModelGraph build_mini_resnet(int depth_blocks, int base_width, int num_classes,
                             int input_channels = 3);

// Fan-in-scaled uniform init for conv/dense weights; bn scale = 1, bn shift
// and biases = 0. Fully determined by the seed.
void init_parameters(ModelGraph& graph, uint64_t seed);

// Builds tape operations for one forward pass; returns the output tensor id.
Tape::Id forward(ModelGraph& graph, Tape& tape, Tape::Id input_id, bool train);

// Convenience single-tensor forward (eval or train mode).
Tensor forward_values(ModelGraph& graph, const Tensor& input, bool train);

}  // namespace swdnet

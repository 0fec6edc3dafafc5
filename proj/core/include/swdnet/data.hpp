#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "swdnet/tensor.hpp"

namespace swdnet {

enum class Split { Train, Test };

struct Normalization {
  std::vector<float> mean, stdev;  // per channel
};

struct Dataset {
  Tensor images;  // [N,C,H,W], normalized
  std::vector<int> labels;
  int num_classes = 0;
  Split split = Split::Train;
  Normalization norm;

  int size() const { return images.shape.empty() ? 0 : images.dim(0); }
  Shape sample_shape() const {  // {C,H,W}
    return images.shape.empty() ? Shape{} : Shape{images.dim(1), images.dim(2), images.dim(3)};
  }
};

// IDX-format MNIST (big-endian headers; magic 0x00000803 images, 0x00000801
// labels). Pixels scaled to [0,1] then standardized with (0.1307, 0.3081).
Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path);

// CIFAR-10 binary batches: records of 1 label byte + 3072 pixel bytes,
// channel-planar RGB. Per-channel standardization.
Dataset load_cifar10_bin(const std::vector<std::string>& paths);

// Gaussian class-conditional images with orthogonal class centroids separated
// by `margin` noise standard deviations. Deterministic in the seed. The
// centroids depend only on the seed; sample_salt varies the noise draws so
// train/test splits share one class geometry.
Dataset synthetic_blobs(uint64_t seed, int n, int num_classes, const Shape& chw, double margin,
                        uint64_t sample_salt = 0);

// Undo a loader's standardization (test support).
float denormalize(const Dataset& ds, int channel, float value);

struct Batch {
  Tensor images;
  std::vector<int> labels;
};

// The shuffle is a pure function of (seed, epoch).
std::vector<int> batch_order(int n, uint64_t seed, int epoch);

int num_batches(int n, int batch_size);  // final short batch kept

Batch gather_batch(const Dataset& ds, const std::vector<int>& order, int batch_index,
                   int batch_size);

}  // namespace swdnet

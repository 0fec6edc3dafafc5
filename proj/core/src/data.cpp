#include "swdnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "swdnet/errors.hpp"
#include "swdnet/rng.hpp"

namespace swdnet {

namespace {

constexpr float kMnistMean = 0.1307f;
constexpr float kMnistStd = 0.3081f;
const float kCifarMean[3] = {0.4914f, 0.4822f, 0.4465f};
const float kCifarStd[3] = {0.2470f, 0.2435f, 0.2616f};

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open '" + path + "'");
  f.seekg(0, std::ios::end);
  const auto len = static_cast<size_t>(f.tellg());
  f.seekg(0);
  std::vector<uint8_t> buf(len);
  if (len > 0) f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(len));
  if (!f) throw DataError("short read from '" + path + "'");
  return buf;
}

uint32_t be32(const std::vector<uint8_t>& b, size_t off, const std::string& path) {
  if (off + 4 > b.size())
    throw DataError("'" + path + "': truncated header at offset " + std::to_string(off));
  return (static_cast<uint32_t>(b[off]) << 24) | (static_cast<uint32_t>(b[off + 1]) << 16) |
         (static_cast<uint32_t>(b[off + 2]) << 8) | static_cast<uint32_t>(b[off + 3]);
}

}  // namespace

Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path) {
  const std::vector<uint8_t> img = read_file(images_path);
  const std::vector<uint8_t> lab = read_file(labels_path);

  const uint32_t img_magic = be32(img, 0, images_path);
  if (img_magic != 0x00000803u)
    throw DataError("'" + images_path + "': bad images magic 0x" + [&] {
      char buf[16];
      std::snprintf(buf, sizeof buf, "%08x", img_magic);
      return std::string(buf);
    }() + " at offset 0 (want 0x00000803)");
  const uint32_t lab_magic = be32(lab, 0, labels_path);
  if (lab_magic != 0x00000801u)
    throw DataError("'" + labels_path + "': bad labels magic at offset 0 (want 0x00000801)");

  const uint32_t n = be32(img, 4, images_path);
  const uint32_t rows = be32(img, 8, images_path);
  const uint32_t cols = be32(img, 12, images_path);
  const uint32_t n_lab = be32(lab, 4, labels_path);
  if (n != n_lab)
    throw DataError("image count " + std::to_string(n) + " != label count " +
                    std::to_string(n_lab));
  const size_t img_need = 16 + static_cast<size_t>(n) * rows * cols;
  if (img.size() != img_need)
    throw DataError("'" + images_path + "': payload ends at offset " + std::to_string(img.size()) +
                    ", expected " + std::to_string(img_need));
  const size_t lab_need = 8 + static_cast<size_t>(n);
  if (lab.size() != lab_need)
    throw DataError("'" + labels_path + "': payload ends at offset " + std::to_string(lab.size()) +
                    ", expected " + std::to_string(lab_need));

  Dataset ds;
  ds.num_classes = 10;
  ds.norm.mean = {kMnistMean};
  ds.norm.stdev = {kMnistStd};
  if (n == 0) return ds;

  ds.images = Tensor({static_cast<int>(n), 1, static_cast<int>(rows), static_cast<int>(cols)});
  for (size_t i = 0; i < static_cast<size_t>(n) * rows * cols; ++i)
    ds.images.data[i] = (static_cast<float>(img[16 + i]) / 255.0f - kMnistMean) / kMnistStd;
  ds.labels.resize(n);
  for (uint32_t i = 0; i < n; ++i) {
    const uint8_t v = lab[8 + i];
    if (v > 9)
      throw DataError("'" + labels_path + "': label " + std::to_string(v) + " at offset " +
                      std::to_string(8 + i) + " out of range");
    ds.labels[i] = v;
  }
  return ds;
}

Dataset load_cifar10_bin(const std::vector<std::string>& paths) {
  constexpr size_t kRecord = 3073;
  constexpr int kHW = 32 * 32;

  size_t total = 0;
  std::vector<std::vector<uint8_t>> files;
  for (const std::string& p : paths) {
    std::vector<uint8_t> b = read_file(p);
    if (b.size() % kRecord != 0)
      throw DataError("'" + p + "': length " + std::to_string(b.size()) +
                      " is not a multiple of 3073 (stray bytes from offset " +
                      std::to_string(b.size() - b.size() % kRecord) + ")");
    total += b.size() / kRecord;
    files.push_back(std::move(b));
  }

  Dataset ds;
  ds.num_classes = 10;
  ds.norm.mean.assign(kCifarMean, kCifarMean + 3);
  ds.norm.stdev.assign(kCifarStd, kCifarStd + 3);
  if (total == 0) return ds;

  ds.images = Tensor({static_cast<int>(total), 3, 32, 32});
  ds.labels.resize(total);
  size_t rec = 0;
  for (size_t fi = 0; fi < files.size(); ++fi) {
    const std::vector<uint8_t>& b = files[fi];
    for (size_t r = 0; r < b.size() / kRecord; ++r, ++rec) {
      const uint8_t* p = b.data() + r * kRecord;
      if (p[0] > 9)
        throw DataError("'" + paths[fi] + "': label " + std::to_string(p[0]) + " at offset " +
                        std::to_string(r * kRecord) + " out of range");
      ds.labels[rec] = p[0];
      float* out = ds.images.data.data() + rec * 3 * kHW;
      for (int c = 0; c < 3; ++c)
        for (int i = 0; i < kHW; ++i)
          out[c * kHW + i] =
              (static_cast<float>(p[1 + c * kHW + i]) / 255.0f - kCifarMean[c]) / kCifarStd[c];
    }
  }
  return ds;
}

Dataset synthetic_blobs(uint64_t seed, int n, int num_classes, const Shape& chw, double margin,
                        uint64_t sample_salt) {
  if (chw.size() != 3) throw ConfigError("synthetic_blobs: shape must be {C,H,W}");
  if (num_classes < 2) throw ConfigError("synthetic_blobs: num_classes must be >= 2");
  const int C = chw[0];
  const int64_t hw = static_cast<int64_t>(chw[1]) * chw[2];
  if (num_classes > C)
    throw ConfigError("synthetic_blobs: need num_classes <= channels (class means are "
                      "per-channel constants), got " +
                      std::to_string(num_classes) + " classes for " + std::to_string(C) +
                      " channels");

  // Class means are per-channel constants (orthonormal directions in channel
  // space via Gram-Schmidt), so both flatten- and avgpool-headed models can
  // separate the classes.
  Rng rng(seed);
  std::vector<std::vector<double>> centers(static_cast<size_t>(num_classes));
  for (int k = 0; k < num_classes; ++k) {
    std::vector<double> v(static_cast<size_t>(C));
    for (;;) {
      for (double& x : v) x = rng.normal();
      for (int j = 0; j < k; ++j) {
        double dot = 0.0;
        for (int c = 0; c < C; ++c) dot += v[static_cast<size_t>(c)] * centers[static_cast<size_t>(j)][static_cast<size_t>(c)];
        for (int c = 0; c < C; ++c) v[static_cast<size_t>(c)] -= dot * centers[static_cast<size_t>(j)][static_cast<size_t>(c)];
      }
      double norm = 0.0;
      for (double x : v) norm += x * x;
      norm = std::sqrt(norm);
      if (norm > 1e-8) {
        for (double& x : v) x /= norm;
        break;
      }
    }
    centers[static_cast<size_t>(k)] = std::move(v);
  }

  // Margin = distance from a centroid to the nearest decision boundary in
  // full image space, in noise standard deviations: the pairwise distance
  // between class means is 2 * margin after broadcasting over H*W pixels.
  const double scale = margin * std::sqrt(2.0) / std::sqrt(static_cast<double>(hw));

  Dataset ds;
  ds.num_classes = num_classes;
  ds.norm.mean.assign(static_cast<size_t>(C), 0.0f);
  ds.norm.stdev.assign(static_cast<size_t>(C), 1.0f);
  if (n == 0) return ds;

  Shape full = {n, chw[0], chw[1], chw[2]};
  ds.images = Tensor(full);
  ds.labels.resize(static_cast<size_t>(n));
  Rng noise(mix_seed(seed, 0x5A1Dull + sample_salt));
  for (int i = 0; i < n; ++i) {
    const int y = i % num_classes;
    ds.labels[static_cast<size_t>(i)] = y;
    float* out = ds.images.data.data() + static_cast<size_t>(i) * C * hw;
    const std::vector<double>& c = centers[static_cast<size_t>(y)];
    for (int ch = 0; ch < C; ++ch)
      for (int64_t j = 0; j < hw; ++j)
        out[static_cast<int64_t>(ch) * hw + j] =
            static_cast<float>(scale * c[static_cast<size_t>(ch)] + noise.normal());
  }
  return ds;
}

float denormalize(const Dataset& ds, int channel, float value) {
  return value * ds.norm.stdev[static_cast<size_t>(channel)] +
         ds.norm.mean[static_cast<size_t>(channel)];
}

std::vector<int> batch_order(int n, uint64_t seed, int epoch) {
  Rng rng(mix_seed(seed, 0x9E3779B9ull + static_cast<uint64_t>(epoch)));
  return permutation(n, rng);
}

int num_batches(int n, int batch_size) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  return (n + batch_size - 1) / batch_size;
}

Batch gather_batch(const Dataset& ds, const std::vector<int>& order, int batch_index,
                   int batch_size) {
  const int n = ds.size();
  const int start = batch_index * batch_size;
  const int count = std::min(batch_size, n - start);
  if (count <= 0) throw UsageError("gather_batch: batch index out of range");
  const int64_t sample = numel(ds.sample_shape());

  Batch b;
  b.images = Tensor({count, ds.images.dim(1), ds.images.dim(2), ds.images.dim(3)});
  b.labels.resize(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    const int src = order[static_cast<size_t>(start + i)];
    std::memcpy(b.images.data.data() + static_cast<size_t>(i) * sample,
                ds.images.data.data() + static_cast<size_t>(src) * sample,
                static_cast<size_t>(sample) * sizeof(float));
    b.labels[static_cast<size_t>(i)] = ds.labels[static_cast<size_t>(src)];
  }
  return b;
}

}  // namespace swdnet

#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "swdnet/errors.hpp"

namespace swdnet {

using Shape = std::vector<int>;

inline int64_t numel(const Shape& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

// Dense row-major N-d array. `grad` is empty until requested; when present it
// mirrors `data` element for element.
template <typename T>
struct TensorT {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;

  TensorT() = default;
  explicit TensorT(Shape s) : shape(std::move(s)) {
    for (int d : shape)
      if (d <= 0) throw ConfigError("tensor extent must be positive, got " + shape_str(shape));
    data.assign(static_cast<size_t>(numel(shape)), T(0));
  }
  TensorT(Shape s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
    if (static_cast<int64_t>(data.size()) != numel(shape))
      throw ConfigError("tensor data length " + std::to_string(data.size()) +
                        " does not match shape " + shape_str(shape));
  }

  int64_t size() const { return static_cast<int64_t>(data.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
  }
  void zero_grad() {
    grad.assign(data.size(), T(0));
  }

  bool all_finite() const {
    for (T v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }
};

using Tensor = TensorT<float>;

template <typename T>
TensorT<T> full(Shape shape, T value) {
  TensorT<T> t(std::move(shape));
  std::fill(t.data.begin(), t.data.end(), value);
  return t;
}

}  // namespace swdnet

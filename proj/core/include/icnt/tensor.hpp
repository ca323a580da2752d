#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace icnt {

enum class Dtype : uint8_t { kF32 = 0, kF64 = 1 };

inline std::string shape_str(const std::vector<int64_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

inline int64_t shape_numel(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d < 0) throw std::invalid_argument("negative extent in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

/// Dense row-major N-d array of f32 or f64 elements.
template <typename T>
struct TensorT {
  std::vector<int64_t> shape;
  std::vector<T> data;

  TensorT() = default;
  explicit TensorT(std::vector<int64_t> s)
      : shape(std::move(s)), data(static_cast<size_t>(shape_numel(shape)), T(0)) {}
  TensorT(std::vector<int64_t> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<int64_t>(data.size()) != shape_numel(shape))
      throw std::invalid_argument("tensor data size " + std::to_string(data.size()) +
                                  " does not match shape " + shape_str(shape));
  }

  static TensorT full(std::vector<int64_t> s, T v) {
    TensorT t(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }
  static TensorT zeros(std::vector<int64_t> s) { return TensorT(std::move(s)); }
  static TensorT scalar(T v) { return TensorT({1}, {v}); }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  bool empty() const { return data.empty(); }
  size_t rank() const { return shape.size(); }
  int64_t dim(size_t i) const {
    if (i >= shape.size())
      throw std::out_of_range("dim " + std::to_string(i) + " of tensor " + shape_str(shape));
    return shape[i];
  }

  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  bool same_shape(const TensorT& o) const { return shape == o.shape; }

  /// Scalar value of a 1-element tensor.
  T item() const {
    if (numel() != 1)
      throw std::logic_error("item() on tensor of shape " + shape_str(shape));
    return data[0];
  }

  template <typename U>
  TensorT<U> cast() const {
    TensorT<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }

  static constexpr Dtype dtype() {
    return sizeof(T) == 4 ? Dtype::kF32 : Dtype::kF64;
  }
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

template <typename T>
bool all_finite(const TensorT<T>& t) {
  for (T v : t.data)
    if (!std::isfinite(static_cast<double>(v))) return false;
  return true;
}

namespace detail {
// Finite-output check for op kernels, active in debug builds only.
template <typename T>
inline void debug_check_finite(const TensorT<T>& t, const char* op) {
#ifndef NDEBUG
  if (!all_finite(t))
    throw std::runtime_error(std::string(op) + " produced a non-finite value");
#else
  (void)t;
  (void)op;
#endif
}
}  // namespace detail

}  // namespace icnt

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "icnt/graph.hpp"

namespace icnt {

/// Named parameter snapshot, used for best-epoch retention and checkpoints.
template <typename T>
using ParamSnapshotT = std::vector<std::pair<std::string, TensorT<T>>>;

using ParamSnapshot = ParamSnapshotT<float>;

/// Ordered set of named trainable tensors. Insertion order is the canonical
/// order for optimizer state, checkpoints, and rng consumption.
template <typename T>
class ParamStoreT {
 public:
  ValueT<T> add(const std::string& name, TensorT<T> init);
  const ValueT<T>& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  const std::vector<std::pair<std::string, ValueT<T>>>& entries() const { return entries_; }
  size_t count() const { return entries_.size(); }
  int64_t numel() const;

  void zero_grads();
  ParamSnapshotT<T> snapshot() const;
  /// Restores values from a snapshot taken on the same parameter set.
  void restore(const ParamSnapshotT<T>& snap);

 private:
  std::vector<std::pair<std::string, ValueT<T>>> entries_;
};

using ParamStore = ParamStoreT<float>;

}  // namespace icnt

#include "icnt/params.hpp"

#include <stdexcept>

namespace icnt {

template <typename T>
ValueT<T> ParamStoreT<T>::add(const std::string& name, TensorT<T> init) {
  if (contains(name)) throw std::logic_error("duplicate parameter name: " + name);
  auto node = make_value<T>(std::move(init), /*requires_grad=*/true);
  entries_.emplace_back(name, node);
  return node;
}

template <typename T>
const ValueT<T>& ParamStoreT<T>::get(const std::string& name) const {
  for (const auto& [n, v] : entries_)
    if (n == name) return v;
  throw std::out_of_range("no parameter named " + name);
}

template <typename T>
bool ParamStoreT<T>::contains(const std::string& name) const {
  for (const auto& [n, v] : entries_)
    if (n == name) return true;
  return false;
}

template <typename T>
int64_t ParamStoreT<T>::numel() const {
  int64_t total = 0;
  for (const auto& [n, v] : entries_) total += v->value.numel();
  return total;
}

template <typename T>
void ParamStoreT<T>::zero_grads() {
  for (auto& [n, v] : entries_) v->zero_grad();
}

template <typename T>
ParamSnapshotT<T> ParamStoreT<T>::snapshot() const {
  ParamSnapshotT<T> snap;
  snap.reserve(entries_.size());
  for (const auto& [n, v] : entries_) snap.emplace_back(n, v->value);
  return snap;
}

template <typename T>
void ParamStoreT<T>::restore(const ParamSnapshotT<T>& snap) {
  if (snap.size() != entries_.size())
    throw std::invalid_argument("snapshot has " + std::to_string(snap.size()) +
                                " tensors, parameter set has " + std::to_string(entries_.size()));
  for (size_t i = 0; i < snap.size(); ++i) {
    auto& [name, node] = entries_[i];
    if (snap[i].first != name)
      throw std::invalid_argument("snapshot tensor " + snap[i].first + " does not match parameter " + name);
    if (snap[i].second.shape != node->value.shape)
      throw std::invalid_argument("snapshot tensor " + name + " has shape " +
                                  shape_str(snap[i].second.shape) + ", expected " +
                                  shape_str(node->value.shape));
    node->value = snap[i].second;
  }
}

template class ParamStoreT<float>;
template class ParamStoreT<double>;

}  // namespace icnt

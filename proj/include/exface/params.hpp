#pragma once

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace exface {

template <typename T>
struct Tensor {
  std::string name;
  std::vector<int> shape;
  std::vector<T> data;

  std::size_t numel() const { return data.size(); }
};

/// Ordered collection of named parameter tensors.
template <typename T>
class ParamSet {
 public:
  Tensor<T>& add(const std::string& name, std::vector<int> shape) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter " + name);
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    index_[name] = tensors_.size();
    tensors_.push_back({name, std::move(shape), std::vector<T>(n, T(0))});
    return tensors_.back();
  }

  const Tensor<T>* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &tensors_[it->second];
  }
  Tensor<T>* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &tensors_[it->second];
  }
  const Tensor<T>& at(const std::string& name) const {
    const auto* t = find(name);
    if (!t) throw std::out_of_range("no parameter named " + name);
    return *t;
  }
  Tensor<T>& at(const std::string& name) {
    auto* t = find(name);
    if (!t) throw std::out_of_range("no parameter named " + name);
    return *t;
  }

  std::vector<Tensor<T>>& tensors() { return tensors_; }
  const std::vector<Tensor<T>>& tensors() const { return tensors_; }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += t.numel();
    return n;
  }

  /// Same names and shapes, all zeros.
  ParamSet zeros_like() const {
    ParamSet out;
    for (const auto& t : tensors_) out.add(t.name, t.shape);
    return out;
  }

  void fill(T value) {
    for (auto& t : tensors_) std::fill(t.data.begin(), t.data.end(), value);
  }

  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (const auto& t : tensors_) {
      auto& dst = out.add(t.name, t.shape);
      for (std::size_t i = 0; i < t.numel(); ++i) dst.data[i] = static_cast<U>(t.data[i]);
    }
    return out;
  }

  bool same_layout(const ParamSet& other) const {
    if (tensors_.size() != other.tensors_.size()) return false;
    for (std::size_t i = 0; i < tensors_.size(); ++i) {
      if (tensors_[i].name != other.tensors_[i].name || tensors_[i].shape != other.tensors_[i].shape) {
        return false;
      }
    }
    return true;
  }

  /// this += scale * other (layouts must match).
  void add_scaled(const ParamSet& other, T scale) {
    for (std::size_t i = 0; i < tensors_.size(); ++i) {
      auto& dst = tensors_[i].data;
      const auto& src = other.tensors_[i].data;
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += scale * src[j];
    }
  }

  bool operator==(const ParamSet& other) const {
    if (!same_layout(other)) return false;
    for (std::size_t i = 0; i < tensors_.size(); ++i) {
      if (tensors_[i].data != other.tensors_[i].data) return false;
    }
    return true;
  }

 private:
  std::vector<Tensor<T>> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace exface

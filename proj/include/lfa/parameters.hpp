#pragma once

#include <cmath>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "lfa/tensor.hpp"

namespace lfa {

// Named arrays addressed by dotted names, e.g. "enc.conv0.weight" or
// "proj.P1". Iteration order is lexicographic, which fixes the order of
// initialization draws and of serialization.
template <typename T>
class ParameterSet {
 public:
  using Map = std::map<std::string, Tensor<T>, std::less<>>;

  bool contains(std::string_view name) const { return arrays_.find(name) != arrays_.end(); }

  const Tensor<T>& at(std::string_view name) const {
    auto it = arrays_.find(name);
    if (it == arrays_.end()) throw ConfigError("unknown parameter '" + std::string(name) + "'");
    return it->second;
  }
  Tensor<T>& at(std::string_view name) {
    auto it = arrays_.find(name);
    if (it == arrays_.end()) throw ConfigError("unknown parameter '" + std::string(name) + "'");
    return it->second;
  }

  void add(std::string name, Tensor<T> value) {
    auto [it, inserted] = arrays_.emplace(std::move(name), std::move(value));
    if (!inserted) throw ConfigError("duplicate parameter name '" + it->first + "'");
  }
  void set(const std::string& name, Tensor<T> value) { arrays_[name] = std::move(value); }

  // Returns the gradient slot for `name`, creating a zero array shaped like
  // `like` on first use.
  Tensor<T>& accumulator(std::string_view name, const Shape& like) {
    auto it = arrays_.find(name);
    if (it == arrays_.end()) it = arrays_.emplace(std::string(name), Tensor<T>(like)).first;
    return it->second;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(arrays_.size());
    for (const auto& [name, _] : arrays_) out.push_back(name);
    return out;
  }

  std::size_t count() const { return arrays_.size(); }
  std::size_t total_size() const {
    std::size_t n = 0;
    for (const auto& [_, t] : arrays_) n += t.size();
    return n;
  }

  bool all_finite() const {
    for (const auto& [_, t] : arrays_)
      for (T v : t.values())
        if (!std::isfinite(v)) return false;
    return true;
  }

  auto begin() { return arrays_.begin(); }
  auto end() { return arrays_.end(); }
  auto begin() const { return arrays_.begin(); }
  auto end() const { return arrays_.end(); }

  template <typename U>
  ParameterSet<U> cast() const {
    ParameterSet<U> out;
    for (const auto& [name, t] : arrays_) out.add(name, t.template cast<U>());
    return out;
  }

  bool operator==(const ParameterSet& other) const = default;

 private:
  Map arrays_;
};

// Batch-norm running statistics are stored alongside weights but are never
// touched by an optimizer.
inline bool is_trainable(std::string_view name) {
  return name.find("running_") == std::string_view::npos;
}

inline bool has_prefix(std::string_view name, std::string_view prefix) {
  return name.substr(0, prefix.size()) == prefix;
}

}  // namespace lfa

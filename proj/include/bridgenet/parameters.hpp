/* Copyright 2026 The BridgeNet Kit Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef BRIDGENET_PARAMETERS_HPP_
#define BRIDGENET_PARAMETERS_HPP_

#include <bit>
#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bridgenet/errors.hpp"
#include "bridgenet/random.hpp"
#include "bridgenet/tensor.hpp"

namespace bridgenet {

enum class StoreRole : std::uint8_t { kTeacher = 0, kStudent = 1, kDenoiser = 2, kRecognizer = 3 };

inline std::string_view to_string(StoreRole role) {
  switch (role) {
    case StoreRole::kTeacher: return "teacher";
    case StoreRole::kStudent: return "student";
    case StoreRole::kDenoiser: return "denoiser";
    case StoreRole::kRecognizer: return "recognizer";
  }
  return "unknown";
}

/// Named learnable tensors of one network, in insertion order. Each entry
/// carries the momentum buffer the optimizer keeps for it.
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    std::vector<double> velocity;
  };

  explicit ParameterStore(StoreRole role = StoreRole::kStudent) : role_(role) {}

  StoreRole role() const noexcept { return role_; }
  void set_role(StoreRole role) noexcept { role_ = role; }

  bool frozen() const noexcept { return frozen_; }
  void freeze() noexcept { frozen_ = true; }
  void unfreeze() noexcept { frozen_ = false; }

  Tensor& add(std::string name, Tensor value) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
    if (!value.is_leaf()) throw ContractError("parameter '" + name + "' must be a leaf tensor");
    value.set_requires_grad(true);
    index_.emplace(name, entries_.size());
    std::vector<double> velocity(value.numel(), 0.0);
    entries_.push_back({std::move(name), std::move(value), std::move(velocity)});
    return entries_.back().value;
  }

  bool contains(std::string_view name) const { return index_.count(std::string(name)) > 0; }

  const Tensor& get(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw ConfigError("no parameter named '" + std::string(name) + "'");
    return entries_[it->second].value;
  }

  Entry& entry(std::string_view name) {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw ConfigError("no parameter named '" + std::string(name) + "'");
    return entries_[it->second];
  }

  std::vector<Entry>& entries() noexcept { return entries_; }
  const std::vector<Entry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.numel();
    return n;
  }

  void zero_grads() {
    for (auto& e : entries_) e.value.clear_grad();
  }

  /// Fresh leaves with copied values and velocities; no shared storage.
  ParameterStore clone() const {
    ParameterStore out(role_);
    for (const auto& e : entries_) {
      Tensor copy = Tensor::from_data(
          e.value.shape(), std::vector<double>(e.value.data().begin(), e.value.data().end()));
      out.add(e.name, std::move(copy));
      out.entries_.back().velocity = e.velocity;
    }
    out.frozen_ = frozen_;
    return out;
  }

  /// True when names, shapes and every value match bit for bit.
  bool bit_identical(const ParameterStore& other) const {
    if (entries_.size() != other.entries_.size()) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      const auto& a = entries_[i];
      const auto& b = other.entries_[i];
      if (a.name != b.name || a.value.shape() != b.value.shape()) return false;
      auto x = a.value.data(), y = b.value.data();
      for (std::size_t j = 0; j < x.size(); ++j) {
        if (std::bit_cast<std::uint64_t>(x[j]) != std::bit_cast<std::uint64_t>(y[j])) return false;
      }
    }
    return true;
  }

 private:
  StoreRole role_;
  bool frozen_ = false;
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

/// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
inline Tensor uniform_init(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> values(shape_numel(shape));
  for (double& v : values) v = rng.uniform(-bound, bound);
  return Tensor::from_data(std::move(shape), std::move(values));
}

}  // namespace bridgenet

#endif  // BRIDGENET_PARAMETERS_HPP_

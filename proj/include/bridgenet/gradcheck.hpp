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

#ifndef BRIDGENET_GRADCHECK_HPP_
#define BRIDGENET_GRADCHECK_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "bridgenet/tensor.hpp"

namespace bridgenet {

/// Central-difference gradient check of a scalar function with respect to
/// the leaf tensor `param`, which the closure must read. The leaf is
/// perturbed in place and restored. Returns the largest elementwise
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
inline double finite_difference_check(const std::function<Tensor()>& f, Tensor param,
                                      double epsilon = 1e-5) {
  if (!(epsilon > 0.0) || epsilon > 1e-2) {
    throw DomainError("finite-difference epsilon must lie in (0, 1e-2]");
  }
  if (!param.is_leaf()) throw ContractError("gradient check needs a leaf tensor");

  const bool had_requires_grad = param.requires_grad();
  param.set_requires_grad(true);
  param.clear_grad();

  Tensor loss = f();
  {
    NoGradGuard no_grad;
    const Tensor again = f();
    if (loss.item() != again.item()) {
      throw ContractError("function under gradient check is not deterministic");
    }
  }
  backward(loss);
  std::vector<double> analytic(param.numel(), 0.0);
  if (param.has_grad()) {
    std::copy(param.grad().begin(), param.grad().end(), analytic.begin());
  }
  param.clear_grad();
  param.set_requires_grad(had_requires_grad);

  NoGradGuard no_grad;
  auto values = param.mutable_data();
  double worst = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double original = values[i];
    values[i] = original + epsilon;
    const double up = f().item();
    values[i] = original - epsilon;
    const double down = f().item();
    values[i] = original;
    const double numeric = (up - down) / (2.0 * epsilon);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

/// Gradient check of f at x; x is copied into a fresh leaf first.
inline double finite_difference_check(const std::function<Tensor(const Tensor&)>& f,
                                      const Tensor& x, double epsilon = 1e-5) {
  Tensor leaf = Tensor::from_data(x.shape(), std::vector<double>(x.data().begin(), x.data().end()),
                                  true);
  return finite_difference_check([&] { return f(leaf); }, leaf, epsilon);
}

}  // namespace bridgenet

#endif  // BRIDGENET_GRADCHECK_HPP_

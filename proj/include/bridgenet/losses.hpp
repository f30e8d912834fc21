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

// Frame-level training objectives. Per-frame tensors are matrices with one
// frame per row. Every loss sums over frames; Reduction::kMeanOverFrames
// divides by the row count instead. Cross-entropy arguments are always
// (target, prediction).

#ifndef BRIDGENET_LOSSES_HPP_
#define BRIDGENET_LOSSES_HPP_

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bridgenet/errors.hpp"
#include "bridgenet/recursive_net.hpp"
#include "bridgenet/tensor.hpp"

namespace bridgenet {

enum class Reduction { kSum, kMeanOverFrames };

namespace detail {

inline Tensor reduce_frames(const Tensor& total, std::size_t frames, Reduction r) {
  return r == Reduction::kSum ? total : scale(total, 1.0 / static_cast<double>(frames));
}

inline std::size_t frame_count(const Tensor& t) { return t.rank() == 1 ? 1 : t.shape()[0]; }

inline void require_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw DomainError("alpha must lie in [0, 1], got " + std::to_string(alpha));
  }
}

}  // namespace detail

/// sum_t |x_de_t - x_clean_t|^2.
inline Tensor denoise_mse(const Tensor& x_de, const Tensor& x_clean,
                          Reduction reduction = Reduction::kSum) {
  detail::require_same_shape(x_de, x_clean, "denoise_mse");
  return detail::reduce_frames(sum(square(x_de - x_clean)), detail::frame_count(x_de), reduction);
}

/// (1 - alpha) ce + alpha mse.
inline Tensor multitask_loss(const Tensor& ce, const Tensor& mse, double alpha) {
  detail::require_alpha(alpha);
  return scale(ce, 1.0 - alpha) + scale(mse, alpha);
}

/// -sum_t log softmax(logits_t)[y_t].
inline Tensor label_cross_entropy(const Tensor& logits, std::span<const std::uint32_t> labels,
                                  Reduction reduction = Reduction::kSum) {
  detail::require_matrix(logits, "label_cross_entropy");
  const Tensor ll = pick(log_softmax_with_temperature(logits, 1.0), labels);
  return detail::reduce_frames(scale(sum(ll), -1.0), logits.rows(), reduction);
}

/// Distillation objective:
///   (1 - alpha) sum_t CE(P_T(t), P_S(t)) + alpha sum_t CE(y_t, softmax(a_S(t)))
/// with P = softmax(a / tau). The teacher logits are detached and the soft
/// term carries no tau^2 factor.
inline Tensor kd_loss(const Tensor& teacher_logits, const Tensor& student_logits,
                      std::span<const std::uint32_t> labels, double alpha, double tau,
                      Reduction reduction = Reduction::kSum) {
  detail::require_alpha(alpha);
  if (!(tau > 0.0)) throw DomainError("kd_loss temperature must be positive");
  detail::require_same_shape(teacher_logits, student_logits, "kd_loss");
  detail::require_matrix(student_logits, "kd_loss");
  const Tensor p_teacher = softmax_with_temperature(teacher_logits.detach(), tau);
  const Tensor log_p_student = log_softmax_with_temperature(student_logits, tau);
  const Tensor soft = scale(sum(p_teacher * log_p_student), -1.0);
  Tensor total = scale(soft, 1.0 - alpha);
  if (alpha > 0.0) total = total + scale(label_cross_entropy(student_logits, labels), alpha);
  return detail::reduce_frames(total, student_logits.rows(), reduction);
}

/// sum_t |h_t - q_t|^2 with the teacher hint h detached.
inline Tensor bridge_mse(const Tensor& teacher_tap, const Tensor& student_tap,
                         const std::string& tap_name = "bridge",
                         Reduction reduction = Reduction::kSum) {
  if (teacher_tap.shape() != student_tap.shape()) {
    throw BridgeConfigError("bridge on tap '" + tap_name + "': teacher " +
                            shape_string(teacher_tap.shape()) + " vs student " +
                            shape_string(student_tap.shape()));
  }
  return detail::reduce_frames(sum(square(teacher_tap.detach() - student_tap)),
                               detail::frame_count(student_tap), reduction);
}

/// -sum_t P_T(t) . log P_S(t), teacher detached. Rows must be distributions.
inline Tensor bridge_ce(const Tensor& teacher_posterior, const Tensor& student_posterior,
                        Reduction reduction = Reduction::kSum) {
  if (teacher_posterior.shape() != student_posterior.shape()) {
    throw BridgeConfigError("cross-entropy bridge: teacher " +
                            shape_string(teacher_posterior.shape()) + " vs student " +
                            shape_string(student_posterior.shape()));
  }
  const std::size_t k = teacher_posterior.shape().back();
  for (const Tensor* t : {&teacher_posterior, &student_posterior}) {
    auto x = t->data();
    for (std::size_t r = 0; r < x.size() / k; ++r) {
      double total = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        if (x[r * k + j] < 0.0) throw ContractError("cross-entropy bridge: negative probability");
        total += x[r * k + j];
      }
      if (std::abs(total - 1.0) > 1e-6) {
        throw ContractError("cross-entropy bridge: row " + std::to_string(r) + " sums to " +
                            std::to_string(total));
      }
    }
  }
  return detail::reduce_frames(scale(sum(teacher_posterior.detach() * log(student_posterior)), -1.0),
                               detail::frame_count(student_posterior), reduction);
}

// ---------------------------------------------------------------------------
// Bridge configuration

enum class BridgeKind { kMse, kCrossEntropy };

struct Bridge {
  std::string tap;
  BridgeKind kind = BridgeKind::kMse;
  double weight = 0.0;
};

struct LossWeights {
  double alpha = 0.5;        // multi-task / KD interpolation
  double tau = 2.0;          // softmax temperature of the posterior bridge
  double hard_label = 0.4;   // weight of the hard-label CE term in the bridge total

  void validate() const {
    detail::require_alpha(alpha);
    if (!(tau > 0.0)) throw DomainError("tau must be positive");
    if (hard_label < 0.0) throw DomainError("hard-label weight must be >= 0");
  }
};

/// Short component name used in logs and metrics: kd, dr, lstm3.
inline std::string bridge_component(const std::string& tap) {
  if (tap == kTapPosterior) return "kd";
  if (tap == kTapMerge) return "dr";
  if (tap == kTapLstmTop) return "lstm3";
  return tap;
}

struct BridgeSpec {
  std::vector<Bridge> bridges;

  void validate() const {
    for (const Bridge& b : bridges) {
      if (b.tap != kTapPosterior && b.tap != kTapMerge && b.tap != kTapLstmTop &&
          b.tap != kTapLogits) {
        throw BridgeConfigError("unknown bridge tap '" + b.tap + "'");
      }
      if (b.kind == BridgeKind::kCrossEntropy && b.tap != kTapPosterior) {
        throw BridgeConfigError("cross-entropy bridges are only defined on the posterior tap, not '" +
                                b.tap + "'");
      }
      if (!(b.weight >= 0.0)) throw BridgeConfigError("bridge weight on '" + b.tap + "' is negative");
    }
  }

  std::vector<std::string> taps() const {
    std::vector<std::string> out;
    for (const Bridge& b : bridges) out.push_back(b.tap);
    return out;
  }

  /// Presets baseline, KD, KD+DR, KD+DR+LSTM3 with weights 0.3 / 0.2 / 0.1.
  static BridgeSpec preset(const std::string& name) {
    const Bridge kd{kTapPosterior, BridgeKind::kCrossEntropy, 0.3};
    const Bridge dr{kTapMerge, BridgeKind::kMse, 0.2};
    const Bridge lstm3{kTapLstmTop, BridgeKind::kMse, 0.1};
    if (name == "baseline") return {};
    if (name == "KD") return {{kd}};
    if (name == "KD+DR") return {{kd, dr}};
    if (name == "KD+DR+LSTM3") return {{kd, dr, lstm3}};
    throw ConfigError("unknown bridge preset '" + name +
                      "' (expected baseline, KD, KD+DR or KD+DR+LSTM3)");
  }
};

struct BridgeLoss {
  Tensor total;
  std::map<std::string, double> components;  // unweighted e_i by component name, plus "ce"
  std::optional<std::string> warning;
};

/// sum_i alpha_i e_i plus hard_label * CE(y, softmax(student logits)).
/// Zero-weight terms are skipped. Taps are matched by name; the hard-label
/// term needs the student "logits" tap and labels.
inline BridgeLoss bridge_total(const BridgeSpec& spec, const LossWeights& weights,
                               const std::map<std::string, Tensor>& teacher_taps,
                               const std::map<std::string, Tensor>& student_taps,
                               std::span<const std::uint32_t> labels = {},
                               Reduction reduction = Reduction::kSum) {
  spec.validate();
  weights.validate();
  BridgeLoss out;
  std::optional<Tensor> total;
  auto accumulate = [&](const Tensor& term, double weight) {
    Tensor weighted = scale(term, weight);
    total = total ? *total + weighted : weighted;
  };
  auto find = [](const std::map<std::string, Tensor>& taps, const std::string& name,
                 const char* side) -> const Tensor& {
    auto it = taps.find(name);
    if (it == taps.end()) {
      throw BridgeConfigError(std::string(side) + " tap '" + name + "' is missing");
    }
    return it->second;
  };

  for (const Bridge& b : spec.bridges) {
    if (b.weight == 0.0) continue;
    const Tensor& h = find(teacher_taps, b.tap, "teacher");
    const Tensor& q = find(student_taps, b.tap, "student");
    const Tensor e = b.kind == BridgeKind::kCrossEntropy ? bridge_ce(h, q, reduction)
                                                         : bridge_mse(h, q, b.tap, reduction);
    out.components[bridge_component(b.tap)] = e.item();
    accumulate(e, b.weight);
  }
  if (weights.hard_label > 0.0) {
    const Tensor& logits = find(student_taps, kTapLogits, "student");
    const Tensor ce = label_cross_entropy(logits, labels, reduction);
    out.components["ce"] = ce.item();
    accumulate(ce, weights.hard_label);
  }
  if (!total) {
    out.warning = "all loss weights are zero; the bridge total is identically 0";
    out.total = Tensor::scalar(0.0);
  } else {
    out.total = *total;
  }
  return out;
}

}  // namespace bridgenet

#endif  // BRIDGENET_LOSSES_HPP_

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

// Two-phase protocol: a teacher trained on clean frames, then a student
// trained on noisy frames against the frozen teacher through knowledge
// bridges. Also the plain baseline and the multi-task denoising model.

#ifndef BRIDGENET_TRAINING_HPP_
#define BRIDGENET_TRAINING_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bridgenet/checkpoint.hpp"
#include "bridgenet/config.hpp"
#include "bridgenet/data.hpp"
#include "bridgenet/errors.hpp"
#include "bridgenet/losses.hpp"
#include "bridgenet/parameters.hpp"
#include "bridgenet/random.hpp"
#include "bridgenet/recursive_net.hpp"
#include "bridgenet/tensor.hpp"

namespace bridgenet {

/// v <- momentum v + grad; param <- param - lr v; grads cleared afterwards.
inline void sgd_step(ParameterStore& store, double learning_rate, double momentum) {
  if (store.frozen()) {
    throw ContractError("sgd_step on a frozen " + std::string(to_string(store.role())) + " store");
  }
  for (auto& e : store.entries()) {
    auto values = e.value.mutable_data();
    auto grad = e.value.grad();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grad.empty() ? 0.0 : grad[i];
      e.velocity[i] = momentum * e.velocity[i] + g;
      values[i] -= learning_rate * e.velocity[i];
    }
    e.value.clear_grad();
  }
}

struct EpochLog {
  std::size_t epoch = 0;
  std::size_t stage = 0;
  double noise_variance = 0.0;  // active curriculum stage, or 0 without one
  std::size_t steps = 0;
  double loss = 0.0;
  std::map<std::string, double> components;
  double accuracy = 0.0;

  bool operator==(const EpochLog&) const = default;
};

struct TrainLog {
  std::vector<EpochLog> epochs;
  std::vector<std::size_t> stage_starts;  // epochs where a curriculum stage began
  std::vector<std::string> warnings;

  bool operator==(const TrainLog&) const = default;
};

struct TrainResult {
  ParameterStore model;
  std::optional<ParameterStore> denoiser;
  TrainLog log;
};

struct TrainHooks {
  std::optional<Checkpoint> resume;
  std::function<void(const Checkpoint&)> on_epoch_end;
  // Stops after this many completed epochs, as if the run were interrupted.
  std::optional<std::size_t> stop_after_epochs;
};

namespace detail {

// Seed streams, so that one seed drives independent initializations.
inline constexpr std::uint64_t kTeacherInitStream = 101;
inline constexpr std::uint64_t kStudentInitStream = 102;
inline constexpr std::uint64_t kDenoiserInitStream = 103;
inline constexpr std::uint64_t kShuffleStream = 201;

using Batch = std::vector<const Triplet*>;

// Chunks the shuffled order into batches; each chunk is split further into
// groups of equal sequence length so frames can be stacked.
inline std::vector<Batch> make_batches(const Corpus& corpus, const std::vector<std::size_t>& order,
                                       std::size_t batch_size) {
  std::vector<Batch> out;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    std::vector<Batch> groups;
    for (std::size_t i = start; i < std::min(order.size(), start + batch_size); ++i) {
      const Triplet* t = &corpus.sequences[order[i]];
      auto it = std::find_if(groups.begin(), groups.end(),
                             [&](const Batch& g) { return g.front()->frames == t->frames; });
      if (it == groups.end()) groups.push_back({t});
      else it->push_back(t);
    }
    for (auto& g : groups) out.push_back(std::move(g));
  }
  return out;
}

inline std::vector<std::size_t> shuffled_order(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

struct StepResult {
  Tensor loss;
  std::map<std::string, double> components;
  std::size_t frames = 0;
  std::size_t correct = 0;
};

inline std::size_t count_correct(const Tensor& logits, std::span<const std::uint32_t> labels) {
  const auto predicted = argmax_rows(logits);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) correct += predicted[i] == labels[i];
  return correct;
}

using StepFn = std::function<StepResult(const Batch&)>;

// Shared epoch loop: shuffling, curriculum, SGD, logging, checkpoints.
inline TrainLog run_epochs(const TrainConfig& config, Corpus& corpus,
                           const std::vector<ParameterStore*>& stores, const StepFn& step,
                           bool use_curriculum, const TrainHooks& hooks) {
  TrainLog log;
  Rng rng(mix_seed(config.seed, kShuffleStream));
  std::size_t first_epoch = 0;
  if (hooks.resume) {
    const Checkpoint& ck = *hooks.resume;
    if (ck.config_hash != config_hash(config)) {
      throw IncompatibleCheckpointError("checkpoint was written for a different configuration");
    }
    if (ck.stores.size() != stores.size()) {
      throw IncompatibleCheckpointError("checkpoint holds a different number of stores");
    }
    for (std::size_t i = 0; i < stores.size(); ++i) {
      const ParameterStore& loaded = ck.stores[i];
      if (loaded.role() != stores[i]->role() || loaded.size() != stores[i]->size()) {
        throw IncompatibleCheckpointError("checkpoint store layout does not match the model");
      }
      // Values are copied into the existing tensors, which the bound network holds.
      for (std::size_t k = 0; k < loaded.size(); ++k) {
        const auto& from = loaded.entries()[k];
        auto& to = stores[i]->entries()[k];
        if (from.name != to.name || from.value.shape() != to.value.shape()) {
          throw IncompatibleCheckpointError("checkpoint parameter '" + from.name +
                                            "' does not match the model");
        }
        std::copy(from.value.data().begin(), from.value.data().end(),
                  to.value.mutable_data().begin());
        to.velocity = from.velocity;
      }
    }
    rng.set_state(ck.rng_state);
    first_epoch = ck.epoch;
  }

  const auto schedule = use_curriculum ? config.curriculum() : std::nullopt;
  std::optional<std::size_t> active_stage;
  std::size_t completed = 0;

  for (std::size_t epoch = first_epoch; epoch < config.epochs; ++epoch) {
    EpochLog entry;
    entry.epoch = epoch;
    if (schedule) {
      entry.stage = schedule->stage_index(epoch);
      const CorruptionConfig& stage_config = curriculum_configs(*schedule, epoch);
      entry.noise_variance = stage_config.noise_variance;
      if (active_stage != entry.stage) {
        recorrupt(corpus, stage_config);
        if (schedule->stages()[entry.stage].first_epoch == epoch) log.stage_starts.push_back(epoch);
        active_stage = entry.stage;
      }
    }

    const auto batches = make_batches(corpus, shuffled_order(corpus.sequences.size(), rng),
                                      config.batch_size);
    double weighted_loss = 0.0;
    std::map<std::string, double> weighted_components;
    std::size_t frames = 0, correct = 0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      try {
        StepResult r = step(batches[b]);
        const double value = r.loss.item();
        if (!std::isfinite(value)) throw NumericError("non-finite loss");
        backward(r.loss);
        for (ParameterStore* s : stores) sgd_step(*s, config.learning_rate, config.momentum);
        weighted_loss += value * static_cast<double>(r.frames);
        for (const auto& [name, v] : r.components) {
          weighted_components[name] += v * static_cast<double>(r.frames);
        }
        frames += r.frames;
        correct += r.correct;
      } catch (const NumericError& e) {
        throw TrainingError("training diverged at epoch " + std::to_string(epoch) + ", step " +
                            std::to_string(b) + ": " + e.what());
      }
    }
    entry.steps = batches.size();
    entry.loss = weighted_loss / static_cast<double>(frames);
    for (const auto& [name, v] : weighted_components) {
      entry.components[name] = v / static_cast<double>(frames);
    }
    entry.accuracy = static_cast<double>(correct) / static_cast<double>(frames);
    log.epochs.push_back(std::move(entry));

    ++completed;
    if (hooks.on_epoch_end) {
      Checkpoint ck;
      for (const ParameterStore* s : stores) ck.stores.push_back(s->clone());
      ck.config_hash = config_hash(config);
      ck.epoch = static_cast<std::uint32_t>(epoch + 1);
      ck.rng_state = rng.state();
      hooks.on_epoch_end(ck);
    }
    if (hooks.stop_after_epochs && completed >= *hooks.stop_after_epochs) break;
  }
  return log;
}

// Frozen-teacher activations per sequence, frame rows [T x width] per tap.
class TeacherCache {
 public:
  TeacherCache(const RecursiveNetConfig& net_config, const ParameterStore& teacher,
               const Corpus& corpus, const std::vector<std::string>& taps,
               std::optional<std::size_t> recursion, std::size_t chunk) {
    const RecursiveNet net = RecursiveNet::bind(net_config, teacher);
    std::vector<std::size_t> order(corpus.sequences.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    NoGradGuard no_grad;
    per_sequence_.resize(corpus.sequences.size());
    for (const Batch& batch : make_batches(corpus, order, chunk)) {
      const auto trace = unroll_forward(net, stack_context(frame_tensors(batch, false),
                                                           net_config.context));
      const auto collected = collect_taps(trace, taps, recursion);
      const std::size_t b = batch.size();
      for (const auto& [name, tensor] : collected) {
        const std::size_t width = tensor.cols();
        widths_[name] = width;
        for (std::size_t j = 0; j < b; ++j) {
          const std::size_t seq = static_cast<std::size_t>(batch[j] - corpus.sequences.data());
          auto& rows = per_sequence_[seq][name];
          const std::size_t frames = batch[j]->frames;
          rows.resize(frames * width);
          for (std::size_t t = 0; t < frames; ++t) {
            std::copy_n(tensor.data().begin() + static_cast<std::ptrdiff_t>((t * b + j) * width),
                        width, rows.begin() + static_cast<std::ptrdiff_t>(t * width));
          }
        }
      }
    }
  }

  /// Tap rows in frame-major batch order, matching collect_taps on the student.
  Tensor assemble(const std::string& tap, const Batch& batch,
                  const std::vector<const Triplet*>& all) const {
    const std::size_t width = widths_.at(tap);
    const std::size_t frames = batch.front()->frames;
    std::vector<double> values;
    values.reserve(frames * batch.size() * width);
    for (std::size_t t = 0; t < frames; ++t) {
      for (const Triplet* s : batch) {
        const auto& rows = per_sequence_[index_of(s, all)].at(tap);
        values.insert(values.end(), rows.begin() + static_cast<std::ptrdiff_t>(t * width),
                      rows.begin() + static_cast<std::ptrdiff_t>((t + 1) * width));
      }
    }
    return Tensor::matrix(frames * batch.size(), width, std::move(values));
  }

 private:
  static std::size_t index_of(const Triplet* t, const std::vector<const Triplet*>& all) {
    return static_cast<std::size_t>(t - all.front());
  }

  std::vector<std::map<std::string, std::vector<double>>> per_sequence_;
  std::map<std::string, std::size_t> widths_;
};

inline void require_nonempty(const Corpus& corpus) {
  if (corpus.sequences.empty()) throw ContractError("training corpus is empty");
  for (const auto& s : corpus.sequences) s.validate(corpus.num_classes);
}

inline void require_matching(const RecursiveNetConfig& net, const Corpus& corpus) {
  if (net.num_classes != corpus.num_classes || net.feat_dim != corpus.feat_dim) {
    throw ConfigError("network expects K=" + std::to_string(net.num_classes) + ", D=" +
                      std::to_string(net.feat_dim) + " but the corpus has K=" +
                      std::to_string(corpus.num_classes) + ", D=" +
                      std::to_string(corpus.feat_dim));
  }
}

}  // namespace detail

/// Frame cross-entropy on clean features. Returns a frozen teacher store.
inline TrainResult train_teacher(const TrainConfig& config, const Corpus& corpus,
                                 const TrainHooks& hooks = {}) {
  if (config.mode != TrainMode::kTeacher) throw ConfigError("train_teacher needs mode=teacher");
  config.validate();
  detail::require_nonempty(corpus);
  const RecursiveNetConfig net_config = config.teacher_net();
  detail::require_matching(net_config, corpus);

  ParameterStore store = init_parameters(
      net_config, mix_seed(config.seed, detail::kTeacherInitStream), StoreRole::kTeacher);
  const RecursiveNet net = RecursiveNet::bind(net_config, store);
  Corpus working = corpus;

  auto step = [&](const detail::Batch& batch) {
    const auto trace = unroll_forward(net, stack_context(frame_tensors(batch, false),
                                                         net_config.context));
    const Tensor logits = concat_rows(trace.last().logits);
    const auto labels = frame_major_labels(batch);
    detail::StepResult r;
    r.loss = label_cross_entropy(logits, labels, config.reduction);
    r.components["ce"] = r.loss.item();
    r.frames = labels.size();
    r.correct = detail::count_correct(logits, labels);
    return r;
  };
  TrainLog log = detail::run_epochs(config, working, {&store}, step, false, hooks);
  store.freeze();
  return {std::move(store), std::nullopt, std::move(log)};
}

/// Student on noisy features with the configured bridges to a frozen
/// teacher (mode student_kd_bridges), or plain hard-label training that
/// ignores the teacher (mode baseline).
inline TrainResult train_student(const TrainConfig& config, const Corpus& corpus,
                                 const ParameterStore* teacher, const TrainHooks& hooks = {}) {
  if (config.mode != TrainMode::kStudentKdBridges && config.mode != TrainMode::kBaseline) {
    throw ConfigError("train_student needs mode=student_kd_bridges or mode=baseline");
  }
  config.validate();
  detail::require_nonempty(corpus);
  const RecursiveNetConfig student_config = config.student_net();
  const RecursiveNetConfig teacher_config = config.teacher_net();
  detail::require_matching(student_config, corpus);

  const bool use_teacher = config.mode == TrainMode::kStudentKdBridges;
  const BridgeSpec spec = use_teacher ? config.bridge_spec() : BridgeSpec{};
  BridgeSpec active;
  for (const Bridge& b : spec.bridges) {
    if (b.weight > 0.0) active.bridges.push_back(b);
  }
  TrainLog warnings_log;
  if (active.bridges.empty() && config.weights.hard_label == 0.0) {
    warnings_log.warnings.push_back("all loss weights are zero; the student will not move");
  }

  std::optional<detail::TeacherCache> cache;
  std::vector<std::string> teacher_taps;
  if (use_teacher && !active.bridges.empty()) {
    if (!teacher) throw ContractError("student training with bridges needs a teacher store");
    if (!teacher->frozen()) throw ContractError("the teacher store must be frozen");
    detail::require_matching(teacher_config, corpus);
    // Tap widths are read off the teacher store and checked before the first step.
    auto width = [&](const char* name) { return teacher->get(name).shape()[0]; };
    const std::size_t teacher_width[] = {width("output.bias"), width("merge.bias"),
                                         width("output.w")};
    const std::size_t student_width[] = {student_config.num_classes, student_config.merge_width,
                                         student_config.output_stack.hidden};
    for (const Bridge& b : active.bridges) {
      const std::size_t k = b.tap == kTapPosterior ? 0 : b.tap == kTapMerge ? 1 : 2;
      if (teacher_width[k] != student_width[k]) {
        throw BridgeConfigError("bridge on tap '" + b.tap + "': teacher width " +
                                std::to_string(teacher_width[k]) + " vs student " +
                                std::to_string(student_width[k]));
      }
      teacher_taps.push_back(b.tap == kTapPosterior ? std::string(kTapLogits) : b.tap);
    }
    RecursiveNet::bind(teacher_config, *teacher);
    cache.emplace(teacher_config, *teacher, corpus, teacher_taps, config.bridge_recursion,
                  config.batch_size);
  }

  ParameterStore store = init_parameters(
      student_config, mix_seed(config.seed, detail::kStudentInitStream), StoreRole::kStudent);
  const RecursiveNet net = RecursiveNet::bind(student_config, store);
  Corpus working = corpus;
  std::vector<const Triplet*> all;
  for (const auto& s : working.sequences) all.push_back(&s);

  std::vector<std::string> student_taps = active.taps();
  student_taps.push_back(kTapLogits);

  auto step = [&](const detail::Batch& batch) {
    const auto trace = unroll_forward(net, stack_context(frame_tensors(batch, true),
                                                         student_config.context));
    const auto labels = frame_major_labels(batch);
    auto taps = collect_taps(trace, student_taps, config.bridge_recursion, config.weights.tau);
    std::map<std::string, Tensor> hints;
    if (cache) {
      for (const Bridge& b : active.bridges) {
        if (b.tap == kTapPosterior) {
          hints.emplace(b.tap, softmax_with_temperature(cache->assemble(kTapLogits, batch, all),
                                                        config.weights.tau));
        } else {
          hints.emplace(b.tap, cache->assemble(b.tap, batch, all));
        }
      }
    }
    // The hard-label term and accuracy always use the last recursion at tau = 1.
    const Tensor logits = config.bridge_recursion ? concat_rows(trace.last().logits)
                                                  : taps.at(kTapLogits);
    taps[kTapLogits] = logits;
    BridgeLoss loss = bridge_total(active, config.weights, hints, taps, labels, config.reduction);
    detail::StepResult r;
    r.loss = loss.total;
    r.components = std::move(loss.components);
    r.frames = labels.size();
    r.correct = detail::count_correct(logits, labels);
    return r;
  };
  TrainLog log = detail::run_epochs(config, working, {&store}, step, true, hooks);
  log.warnings.insert(log.warnings.begin(), warnings_log.warnings.begin(),
                      warnings_log.warnings.end());
  return {std::move(store), std::nullopt, std::move(log)};
}

// ---------------------------------------------------------------------------
// Multi-task denoising

/// Two-layer feedforward front end mapping a noisy frame to a D-dim estimate.
struct Denoiser {
  Tensor w1, b1, w2, b2;

  static ParameterStore init(std::size_t dim, std::size_t hidden, std::uint64_t seed) {
    Rng rng(seed);
    ParameterStore store(StoreRole::kDenoiser);
    store.add("denoiser.w1", uniform_init({dim, hidden}, dim, rng));
    store.add("denoiser.b1", Tensor::zeros({hidden}));
    store.add("denoiser.w2", uniform_init({hidden, dim}, hidden, rng));
    store.add("denoiser.b2", Tensor::zeros({dim}));
    return store;
  }

  static Denoiser bind(const ParameterStore& store) {
    return {store.get("denoiser.w1"), store.get("denoiser.b1"), store.get("denoiser.w2"),
            store.get("denoiser.b2")};
  }

  Tensor operator()(const Tensor& x) const {
    return add_bias(matmul(tanh(add_bias(matmul(x, w1), b1)), w2), b2);
  }
};

/// Minimizes (1 - alpha) CE(y, P(x_de)) + alpha sum |x_de - x*|^2 jointly over
/// the denoiser and the recognizer.
inline TrainResult train_multitask(const TrainConfig& config, const Corpus& corpus,
                                   const TrainHooks& hooks = {}) {
  if (config.mode != TrainMode::kMultitaskDenoise) {
    throw ConfigError("train_multitask needs mode=multitask_denoise");
  }
  config.validate();
  detail::require_nonempty(corpus);
  const RecursiveNetConfig net_config = config.student_net();
  detail::require_matching(net_config, corpus);

  ParameterStore denoiser_store = Denoiser::init(
      net_config.feat_dim, config.denoiser_hidden, mix_seed(config.seed, detail::kDenoiserInitStream));
  ParameterStore store = init_parameters(
      net_config, mix_seed(config.seed, detail::kStudentInitStream), StoreRole::kRecognizer);
  const Denoiser denoiser = Denoiser::bind(denoiser_store);
  const RecursiveNet net = RecursiveNet::bind(net_config, store);
  Corpus working = corpus;
  const double alpha = config.weights.alpha;

  auto step = [&](const detail::Batch& batch) {
    const auto noisy = frame_tensors(batch, true);
    const auto clean = frame_tensors(batch, false);
    std::vector<Tensor> enhanced;
    enhanced.reserve(noisy.size());
    for (const Tensor& x : noisy) enhanced.push_back(denoiser(x));
    const auto trace = unroll_forward(net, stack_context(enhanced, net_config.context));
    const Tensor logits = concat_rows(trace.last().logits);
    const auto labels = frame_major_labels(batch);
    const Tensor ce = label_cross_entropy(logits, labels, config.reduction);
    const Tensor mse = denoise_mse(concat_rows(enhanced), concat_rows(clean), config.reduction);
    detail::StepResult r;
    r.loss = multitask_loss(ce, mse, alpha);
    r.components["ce"] = ce.item();
    r.components["mse"] = mse.item();
    r.frames = labels.size();
    r.correct = detail::count_correct(logits, labels);
    return r;
  };
  TrainLog log = detail::run_epochs(config, working, {&denoiser_store, &store}, step, true, hooks);
  return {std::move(store), std::move(denoiser_store), std::move(log)};
}

}  // namespace bridgenet

#endif  // BRIDGENET_TRAINING_HPP_

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

// The recursive CNN-LSTM network. One parameter set is unrolled R+1 times:
//
//   i_t      = I(x_t)                                  (computed once)
//   gate     = sigmoid(w_x x_t + w_s s^{n-1}_t + w_h h) (h per GateHiddenSource)
//   f^n_t    = F(gate * embed(s^{n-1}_t))               (residual LSTM, own state per n)
//   m^n_t    = g(W1 i_t + W2 f^n_t + b)
//   s^n_t    = softmax(out(L(m^n_t)))                   (residual LSTM, own state per n)
//
// with s^{-1}_t = 0. The recursion loop runs inside each time step.

#ifndef BRIDGENET_RECURSIVE_NET_HPP_
#define BRIDGENET_RECURSIVE_NET_HPP_

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bridgenet/errors.hpp"
#include "bridgenet/nn.hpp"
#include "bridgenet/parameters.hpp"
#include "bridgenet/random.hpp"
#include "bridgenet/tensor.hpp"

namespace bridgenet {

struct StackConfig {
  std::size_t hidden = 32;
  std::size_t depth = 2;
};

/// What a recursion hands to the next one.
enum class FeedbackSignal { kPosterior, kLogits };

/// Which F-stack output the feedback gate reads: the previous frame of the
/// same recursion, or the same frame of the previous recursion.
enum class GateHiddenSource { kPreviousFrame, kPreviousRecursion };

struct RecursiveNetConfig {
  std::size_t recursions = 1;
  std::size_t num_classes = 8;
  std::size_t feat_dim = 16;
  std::size_t context = 1;  // frames on each side of the centre frame

  std::vector<ConvLayerSpec> cnn = {{8, 3, 3, true, 1}, {8, 3, 1, false, 1}};
  Nonlinearity cnn_activation = Nonlinearity::kTanh;

  std::size_t feedback_embed = 32;
  StackConfig feedback_stack{32, 2};
  std::size_t merge_width = 32;
  Nonlinearity merge_activation = Nonlinearity::kTanh;
  StackConfig output_stack{32, 2};

  FeedbackSignal feedback_signal = FeedbackSignal::kPosterior;
  GateHiddenSource gate_hidden = GateHiddenSource::kPreviousFrame;
  // Replaces the learned gate with a constant. Used to sever or fully open
  // the feedback path in experiments.
  std::optional<double> forced_gate;

  std::size_t window() const { return 2 * context + 1; }
  std::size_t input_width() const { return window() * feat_dim; }
  FeatureMap cnn_output() const { return cnn_output_extent(cnn, {1, window(), feat_dim}); }

  void validate() const {
    if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
    if (feat_dim == 0) throw ConfigError("feat_dim must be positive");
    if (feedback_embed == 0 || merge_width == 0) throw ConfigError("layer widths must be positive");
    if (feedback_stack.depth == 0 || output_stack.depth == 0) {
      throw ConfigError("LSTM stacks need depth >= 1");
    }
    if (feedback_stack.hidden == 0 || output_stack.hidden == 0) {
      throw ConfigError("LSTM hidden sizes must be positive");
    }
    if (forced_gate && (*forced_gate < 0.0 || *forced_gate > 1.0)) {
      throw ConfigError("forced gate value must lie in [0, 1]");
    }
    cnn_output();
  }
};

/// Parameters bound to their roles. Tensors share storage with the store.
struct RecursiveNet {
  RecursiveNetConfig config;
  CnnBlock cnn;
  Tensor embed;  // [K x E], no bias so that l_init = 0 embeds to 0
  FeedbackGateParams gate;
  ResidualLstmStack feedback;
  MergeParams merge;
  ResidualLstmStack output;
  Tensor out_w;  // [H_L x K]
  Tensor out_b;  // [K]

  static RecursiveNet bind(const RecursiveNetConfig& config, const ParameterStore& store) {
    config.validate();
    RecursiveNet net;
    net.config = config;
    net.cnn = CnnBlock::bind(store, "cnn", config.cnn, config.cnn_activation);
    net.embed = store.get("feedback.embed");
    net.gate = {store.get("feedback.gate.w_x"), store.get("feedback.gate.w_s"),
                store.get("feedback.gate.w_h")};
    net.feedback = ResidualLstmStack::bind(store, "feedback.lstm", config.feedback_stack.depth);
    net.merge = {store.get("merge.w1"), store.get("merge.w2"), store.get("merge.bias"),
                 config.merge_activation};
    net.output = ResidualLstmStack::bind(store, "output.lstm", config.output_stack.depth);
    net.out_w = store.get("output.w");
    net.out_b = store.get("output.bias");
    if (net.out_w.shape() != Shape{config.output_stack.hidden, config.num_classes}) {
      throw ConfigError("stored output layer does not match the configuration");
    }
    return net;
  }
};

/// Fresh parameters: uniform(+-1/sqrt(fan_in)) weights, zero biases, forget bias +1.
inline ParameterStore init_parameters(const RecursiveNetConfig& config, std::uint64_t seed,
                                      StoreRole role = StoreRole::kStudent) {
  config.validate();
  Rng rng(seed);
  ParameterStore store(role);
  const FeatureMap cnn_out = config.cnn_output();
  const std::size_t k = config.num_classes, e = config.feedback_embed;
  const std::size_t hf = config.feedback_stack.hidden, hl = config.output_stack.hidden;
  const std::size_t m = config.merge_width;

  CnnBlock::create(store, "cnn", config.cnn, {1, config.window(), config.feat_dim},
                   config.cnn_activation, rng);
  store.add("feedback.embed", uniform_init({k, e}, k, rng));
  store.add("feedback.gate.w_x", uniform_init({config.input_width(), e}, config.input_width(), rng));
  store.add("feedback.gate.w_s", uniform_init({k, e}, k, rng));
  store.add("feedback.gate.w_h", uniform_init({hf, e}, hf, rng));
  ResidualLstmStack::create(store, "feedback.lstm", e, hf, config.feedback_stack.depth, rng);
  store.add("merge.w1", uniform_init({cnn_out.flat(), m}, cnn_out.flat() + hf, rng));
  store.add("merge.w2", uniform_init({hf, m}, cnn_out.flat() + hf, rng));
  store.add("merge.bias", Tensor::zeros({m}));
  ResidualLstmStack::create(store, "output.lstm", m, hl, config.output_stack.depth, rng);
  store.add("output.w", uniform_init({hl, k}, hl, rng));
  store.add("output.bias", Tensor::zeros({k}));
  return store;
}

/// Learnable scalar count. Does not depend on the recursion count.
inline std::size_t parameter_count(const RecursiveNetConfig& config) {
  config.validate();
  std::size_t n = 0;
  std::size_t channels = 1;
  for (const auto& l : config.cnn) {
    n += l.out_channels * channels * l.kernel_h * l.kernel_w + l.out_channels;
    channels = l.out_channels;
  }
  const std::size_t k = config.num_classes, e = config.feedback_embed;
  const std::size_t hf = config.feedback_stack.hidden, hl = config.output_stack.hidden;
  const std::size_t m = config.merge_width;
  n += k * e + (config.input_width() + k + hf) * e;
  n += LstmCellParams::parameter_count(e, hf) +
       (config.feedback_stack.depth - 1) * LstmCellParams::parameter_count(hf, hf);
  n += config.cnn_output().flat() * m + hf * m + m;
  n += LstmCellParams::parameter_count(m, hl) +
       (config.output_stack.depth - 1) * LstmCellParams::parameter_count(hl, hl);
  n += hl * k + k;
  return n;
}

/// Activations of one recursion, one tensor per frame ([B x width] each).
struct RecursionRecord {
  std::vector<Tensor> gate;
  std::vector<Tensor> feedback;   // f^n_t, F-stack output
  std::vector<Tensor> merge;      // m^n_t
  std::vector<Tensor> lstm_top;   // L-stack top output
  std::vector<Tensor> logits;
  std::vector<Tensor> posterior;  // softmax(logits)
  std::vector<Tensor> state;      // s^n_t handed to the next recursion
};

struct ForwardTrace {
  std::vector<Tensor> acoustic;  // i_t, shared by all recursions
  std::vector<RecursionRecord> recursions;

  std::size_t frames() const { return acoustic.size(); }
  std::size_t depth() const { return recursions.size(); }
  const RecursionRecord& last() const { return recursions.back(); }
};

/// Runs the unrolled network over a sequence of stacked context windows,
/// each [B x 1 x (2c+1) x D].
inline ForwardTrace unroll_forward(const RecursiveNet& net, const std::vector<Tensor>& windows) {
  const RecursiveNetConfig& cfg = net.config;
  if (windows.empty()) throw ContractError("unroll_forward needs at least one frame");
  const Shape expected{windows.front().shape()[0], 1, cfg.window(), cfg.feat_dim};
  for (const Tensor& w : windows) {
    if (w.shape() != expected) {
      throw DimensionError("context window " + shape_string(w.shape()) + " does not match " +
                           shape_string(expected));
    }
  }
  const std::size_t batch = expected[0];
  const std::size_t depth = cfg.recursions + 1;

  ForwardTrace trace;
  trace.recursions.resize(depth);
  std::vector<ResidualLstmState> f_state(depth, initial_state(net.feedback, batch));
  std::vector<ResidualLstmState> l_state(depth, initial_state(net.output, batch));
  std::vector<Tensor> f_prev_frame(depth, Tensor::zeros({batch, cfg.feedback_stack.hidden}));
  const Tensor l_init = Tensor::zeros({batch, cfg.num_classes});
  const Tensor no_hidden = Tensor::zeros({batch, cfg.feedback_stack.hidden});

  for (const Tensor& window : windows) {
    const Tensor acoustic = cnn_block_forward(net.cnn, window);
    const Tensor flat_input = reshape(window, {batch, cfg.input_width()});
    trace.acoustic.push_back(acoustic);

    Tensor s_prev = l_init;
    Tensor f_prev_recursion = no_hidden;
    for (std::size_t n = 0; n < depth; ++n) {
      RecursionRecord& rec = trace.recursions[n];
      Tensor gate;
      if (cfg.forced_gate) {
        gate = Tensor::full({batch, cfg.feedback_embed}, *cfg.forced_gate);
      } else {
        const Tensor& h = cfg.gate_hidden == GateHiddenSource::kPreviousFrame ? f_prev_frame[n]
                                                                              : f_prev_recursion;
        gate = feedback_gate(net.gate, flat_input, s_prev, h);
      }
      const Tensor gated = gate * matmul(s_prev, net.embed);
      auto [f_out, f_next] = residual_lstm_step(net.feedback, gated, f_state[n]);
      f_state[n] = std::move(f_next);
      const Tensor m = merge_paths(net.merge, acoustic, f_out);
      auto [top, l_next] = residual_lstm_step(net.output, m, l_state[n]);
      l_state[n] = std::move(l_next);
      const Tensor logits = add_bias(matmul(top, net.out_w), net.out_b);
      const Tensor posterior = softmax(logits);
      const Tensor state = cfg.feedback_signal == FeedbackSignal::kPosterior ? posterior : logits;

      rec.gate.push_back(gate);
      rec.feedback.push_back(f_out);
      rec.merge.push_back(m);
      rec.lstm_top.push_back(top);
      rec.logits.push_back(logits);
      rec.posterior.push_back(posterior);
      rec.state.push_back(state);

      f_prev_frame[n] = f_out;
      f_prev_recursion = f_out;
      s_prev = state;
    }
  }
  return trace;
}

inline ForwardTrace unroll_forward(const RecursiveNetConfig& config, const ParameterStore& store,
                                   const std::vector<Tensor>& windows) {
  return unroll_forward(RecursiveNet::bind(config, store), windows);
}

// ---------------------------------------------------------------------------
// Taps

inline constexpr const char* kTapPosterior = "posterior";  // KD bridge
inline constexpr const char* kTapMerge = "merge";          // DR bridge
inline constexpr const char* kTapLstmTop = "lstm_top";     // LSTM3 bridge
inline constexpr const char* kTapLogits = "logits";

inline const std::vector<Tensor>& tap_frames(const RecursionRecord& rec, const std::string& name) {
  if (name == kTapPosterior) return rec.posterior;
  if (name == kTapMerge) return rec.merge;
  if (name == kTapLstmTop) return rec.lstm_top;
  if (name == kTapLogits) return rec.logits;
  throw ConfigError("unknown tap '" + name + "' (expected posterior, merge, lstm_top or logits)");
}

/// Tap activations with frames stacked row-wise: row t * B + b holds frame t
/// of sequence b. Taps come from the last recursion unless `recursion`
/// overrides it. With posterior_tau != 1 the posterior tap is recomputed as
/// softmax(logits / posterior_tau).
inline std::map<std::string, Tensor> collect_taps(const ForwardTrace& trace,
                                                  const std::vector<std::string>& names,
                                                  std::optional<std::size_t> recursion = {},
                                                  double posterior_tau = 1.0) {
  if (trace.recursions.empty() || trace.frames() == 0) {
    throw ContractError("collect_taps on an empty trace");
  }
  const std::size_t n = recursion.value_or(trace.depth() - 1);
  if (n >= trace.depth()) {
    throw ConfigError("tap recursion " + std::to_string(n) + " beyond the trace depth " +
                      std::to_string(trace.depth()));
  }
  std::map<std::string, Tensor> out;
  for (const std::string& name : names) {
    if (name == kTapPosterior && posterior_tau != 1.0) {
      out.emplace(name, softmax_with_temperature(concat_rows(trace.recursions[n].logits),
                                                 posterior_tau));
    } else {
      out.emplace(name, concat_rows(tap_frames(trace.recursions[n], name)));
    }
  }
  return out;
}

}  // namespace bridgenet

#endif  // BRIDGENET_RECURSIVE_NET_HPP_

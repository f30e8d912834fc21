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

// Layer inventory of the recursive network: LSTM cell, residual LSTM stack,
// CNN feature block, feedback gate and the two-path merge layer. All blocks
// operate on row-batched matrices [batch x width].

#ifndef BRIDGENET_NN_HPP_
#define BRIDGENET_NN_HPP_

#include <cstddef>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "bridgenet/errors.hpp"
#include "bridgenet/parameters.hpp"
#include "bridgenet/random.hpp"
#include "bridgenet/tensor.hpp"

namespace bridgenet {

enum class Nonlinearity { kIdentity, kTanh, kSigmoid, kRelu };

inline Tensor apply(Nonlinearity g, const Tensor& x) {
  switch (g) {
    case Nonlinearity::kIdentity: return x;
    case Nonlinearity::kTanh: return tanh(x);
    case Nonlinearity::kSigmoid: return sigmoid(x);
    case Nonlinearity::kRelu: return relu(x);
  }
  return x;
}

inline std::string_view to_string(Nonlinearity g) {
  switch (g) {
    case Nonlinearity::kIdentity: return "identity";
    case Nonlinearity::kTanh: return "tanh";
    case Nonlinearity::kSigmoid: return "sigmoid";
    case Nonlinearity::kRelu: return "relu";
  }
  return "?";
}

inline Nonlinearity parse_nonlinearity(std::string_view name) {
  if (name == "identity") return Nonlinearity::kIdentity;
  if (name == "tanh") return Nonlinearity::kTanh;
  if (name == "sigmoid") return Nonlinearity::kSigmoid;
  if (name == "relu") return Nonlinearity::kRelu;
  throw ConfigError("unknown nonlinearity '" + std::string(name) + "'");
}

namespace detail {

inline void require_width(const Tensor& t, std::size_t width, std::string_view what) {
  if (t.rank() != 2 || t.cols() != width) {
    throw DimensionError(std::string(what) + ": expected [batch x " + std::to_string(width) +
                         "], got " + shape_string(t.shape()));
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// LSTM

/// Gates are packed column-wise in the order input, forget, output, candidate.
struct LstmCellParams {
  enum Gate : std::size_t { kInput = 0, kForget = 1, kOutput = 2, kCandidate = 3 };

  Tensor w_x;   // [D x 4H]
  Tensor w_h;   // [H x 4H]
  Tensor bias;  // [4H]

  std::size_t input_size() const { return w_x.shape()[0]; }
  std::size_t hidden_size() const { return w_h.shape()[0]; }
  std::size_t parameter_count() const { return w_x.numel() + w_h.numel() + bias.numel(); }

  static std::size_t parameter_count(std::size_t input, std::size_t hidden) {
    return 4 * hidden * (input + hidden + 1);
  }

  static LstmCellParams zeros(std::size_t input, std::size_t hidden) {
    return {Tensor::zeros({input, 4 * hidden}, true), Tensor::zeros({hidden, 4 * hidden}, true),
            Tensor::zeros({4 * hidden}, true)};
  }

  /// Registers fresh weights under `prefix` in the store; forget bias starts at +1.
  static LstmCellParams create(ParameterStore& store, const std::string& prefix,
                               std::size_t input, std::size_t hidden, Rng& rng) {
    const std::size_t fan_in = input + hidden;
    LstmCellParams p;
    p.w_x = store.add(prefix + ".w_x", uniform_init({input, 4 * hidden}, fan_in, rng));
    p.w_h = store.add(prefix + ".w_h", uniform_init({hidden, 4 * hidden}, fan_in, rng));
    std::vector<double> b(4 * hidden, 0.0);
    for (std::size_t j = 0; j < hidden; ++j) b[kForget * hidden + j] = 1.0;
    p.bias = store.add(prefix + ".bias", Tensor::vector(std::move(b)));
    return p;
  }

  static LstmCellParams bind(const ParameterStore& store, const std::string& prefix) {
    LstmCellParams p{store.get(prefix + ".w_x"), store.get(prefix + ".w_h"),
                     store.get(prefix + ".bias")};
    if (p.w_x.shape()[1] != 4 * p.hidden_size() || p.bias.numel() != 4 * p.hidden_size()) {
      throw ConfigError("inconsistent LSTM parameters under '" + prefix + "'");
    }
    return p;
  }
};

struct LstmState {
  Tensor h;  // [B x H]
  Tensor c;  // [B x H]
};

inline LstmState lstm_cell_step(const LstmCellParams& params, const Tensor& x,
                                const Tensor& h_prev, const Tensor& c_prev) {
  const std::size_t hidden = params.hidden_size();
  detail::require_width(x, params.input_size(), "lstm input");
  detail::require_width(h_prev, hidden, "lstm h_prev");
  detail::require_width(c_prev, hidden, "lstm c_prev");
  if (h_prev.rows() != x.rows() || c_prev.rows() != x.rows()) {
    throw DimensionError("lstm: batch mismatch between input and state");
  }
  const Tensor z = add_bias(matmul(x, params.w_x) + matmul(h_prev, params.w_h), params.bias);
  const Tensor i = sigmoid(slice_cols(z, 0, hidden));
  const Tensor f = sigmoid(slice_cols(z, hidden, 2 * hidden));
  const Tensor o = sigmoid(slice_cols(z, 2 * hidden, 3 * hidden));
  const Tensor g = tanh(slice_cols(z, 3 * hidden, 4 * hidden));
  Tensor c = f * c_prev + i * g;
  Tensor h = o * tanh(c);
  return {std::move(h), std::move(c)};
}

/// Stacked LSTM with identity shortcuts from layer 2 onward: out_k = h_k + in_k.
struct ResidualLstmStack {
  std::vector<LstmCellParams> layers;

  std::size_t depth() const { return layers.size(); }
  std::size_t input_size() const { return layers.front().input_size(); }
  std::size_t hidden_size() const { return layers.back().hidden_size(); }

  void validate() const {
    if (layers.empty()) throw ConfigError("residual LSTM stack needs depth >= 1");
    for (std::size_t k = 1; k < layers.size(); ++k) {
      if (layers[k].input_size() != layers[k - 1].hidden_size() ||
          layers[k].hidden_size() != layers[k].input_size()) {
        throw ConfigError("residual LSTM layer " + std::to_string(k + 1) +
                          " must keep its width for the shortcut path");
      }
    }
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.parameter_count();
    return n;
  }

  static ResidualLstmStack create(ParameterStore& store, const std::string& prefix,
                                  std::size_t input, std::size_t hidden, std::size_t depth,
                                  Rng& rng) {
    if (depth == 0) throw ConfigError("residual LSTM stack needs depth >= 1");
    ResidualLstmStack s;
    for (std::size_t k = 0; k < depth; ++k) {
      s.layers.push_back(LstmCellParams::create(store, prefix + "." + std::to_string(k),
                                                k == 0 ? input : hidden, hidden, rng));
    }
    return s;
  }

  static ResidualLstmStack bind(const ParameterStore& store, const std::string& prefix,
                                std::size_t depth) {
    ResidualLstmStack s;
    for (std::size_t k = 0; k < depth; ++k) {
      s.layers.push_back(LstmCellParams::bind(store, prefix + "." + std::to_string(k)));
    }
    s.validate();
    return s;
  }
};

struct ResidualLstmState {
  std::vector<LstmState> layers;
};

inline ResidualLstmState initial_state(const ResidualLstmStack& stack, std::size_t batch) {
  ResidualLstmState s;
  for (const auto& l : stack.layers) {
    s.layers.push_back({Tensor::zeros({batch, l.hidden_size()}), Tensor::zeros({batch, l.hidden_size()})});
  }
  return s;
}

/// One time step through every layer; returns the top output and the new state.
inline std::pair<Tensor, ResidualLstmState> residual_lstm_step(const ResidualLstmStack& stack,
                                                               const Tensor& x,
                                                               const ResidualLstmState& state) {
  stack.validate();
  if (state.layers.size() != stack.depth()) {
    throw DimensionError("residual LSTM state depth does not match the stack");
  }
  ResidualLstmState next;
  Tensor input = x;
  for (std::size_t k = 0; k < stack.depth(); ++k) {
    LstmState s = lstm_cell_step(stack.layers[k], input, state.layers[k].h, state.layers[k].c);
    input = k == 0 ? s.h : s.h + input;
    next.layers.push_back(std::move(s));
  }
  return {std::move(input), std::move(next)};
}

inline std::vector<Tensor> residual_lstm_forward(const ResidualLstmStack& stack,
                                                 const std::vector<Tensor>& xs) {
  stack.validate();
  if (xs.empty()) throw ContractError("residual_lstm_forward needs a nonempty sequence");
  ResidualLstmState state = initial_state(stack, xs.front().rows());
  std::vector<Tensor> out;
  out.reserve(xs.size());
  for (const Tensor& x : xs) {
    auto [y, next] = residual_lstm_step(stack, x, state);
    out.push_back(std::move(y));
    state = std::move(next);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Feedback gate and merge

struct FeedbackGateParams {
  Tensor w_x;  // [X x E] acoustic input
  Tensor w_s;  // [K x E] feedback state
  Tensor w_h;  // [H x E] F-stack hidden output

  std::size_t width() const { return w_x.shape()[1]; }
  std::size_t parameter_count() const { return w_x.numel() + w_s.numel() + w_h.numel(); }

  void validate() const {
    if (w_s.shape()[1] != width() || w_h.shape()[1] != width()) {
      throw DimensionError("feedback gate weights disagree on gate width: " +
                           shape_string(w_x.shape()) + ", " + shape_string(w_s.shape()) + ", " +
                           shape_string(w_h.shape()));
    }
  }
};

/// sigmoid(x w_x + s w_s + h w_h), elementwise in (0, 1).
inline Tensor feedback_gate(const FeedbackGateParams& params, const Tensor& x,
                            const Tensor& s_prev_recursion, const Tensor& h_prev) {
  params.validate();
  detail::require_width(x, params.w_x.shape()[0], "gate acoustic input");
  detail::require_width(s_prev_recursion, params.w_s.shape()[0], "gate feedback state");
  detail::require_width(h_prev, params.w_h.shape()[0], "gate hidden input");
  return sigmoid(matmul(x, params.w_x) + matmul(s_prev_recursion, params.w_s) +
                 matmul(h_prev, params.w_h));
}

struct MergeParams {
  Tensor w1;    // [I x M]
  Tensor w2;    // [F x M]
  Tensor bias;  // [M]
  Nonlinearity g = Nonlinearity::kTanh;

  std::size_t width() const { return w1.shape()[1]; }
  std::size_t parameter_count() const { return w1.numel() + w2.numel() + bias.numel(); }
};

/// g(i W1 + f W2 + b); doubles as the dimension-reduction layer.
inline Tensor merge_paths(const MergeParams& params, const Tensor& i_out, const Tensor& f_out) {
  if (params.w2.shape()[1] != params.width() || params.bias.numel() != params.width()) {
    throw DimensionError("merge weights disagree on output width");
  }
  detail::require_width(i_out, params.w1.shape()[0], "merge acoustic path");
  detail::require_width(f_out, params.w2.shape()[0], "merge feedback path");
  return apply(params.g, add_bias(matmul(i_out, params.w1) + matmul(f_out, params.w2), params.bias));
}

// ---------------------------------------------------------------------------
// CNN feature block

struct ConvLayerSpec {
  std::size_t out_channels = 8;
  std::size_t kernel_h = 3;
  std::size_t kernel_w = 3;
  bool same_padding = false;
  std::size_t stride = 1;
};

struct ConvLayerParams {
  ConvLayerSpec spec;
  Tensor kernels;  // [O x C x kh x kw]
  Tensor bias;     // [O]
};

struct FeatureMap {
  std::size_t channels, height, width;
  std::size_t flat() const { return channels * height * width; }
};

/// Output extents after each layer; throws when a kernel no longer fits.
inline FeatureMap cnn_output_extent(const std::vector<ConvLayerSpec>& layers, FeatureMap in) {
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto& l = layers[k];
    if (l.stride == 0 || l.out_channels == 0 || l.kernel_h == 0 || l.kernel_w == 0) {
      throw ConfigError("conv layer " + std::to_string(k) + " has a zero extent");
    }
    const std::size_t ph = l.same_padding ? (l.kernel_h - 1) / 2 : 0;
    const std::size_t pw = l.same_padding ? (l.kernel_w - 1) / 2 : 0;
    if (l.kernel_h > in.height + 2 * ph || l.kernel_w > in.width + 2 * pw) {
      throw ConfigError("conv layer " + std::to_string(k) + " kernel " +
                        std::to_string(l.kernel_h) + "x" + std::to_string(l.kernel_w) +
                        " exceeds its " + std::to_string(in.height) + "x" +
                        std::to_string(in.width) + " input");
    }
    in = {l.out_channels, (in.height + 2 * ph - l.kernel_h) / l.stride + 1,
          (in.width + 2 * pw - l.kernel_w) / l.stride + 1};
  }
  return in;
}

struct CnnBlock {
  std::vector<ConvLayerParams> layers;
  Nonlinearity activation = Nonlinearity::kTanh;

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.kernels.numel() + l.bias.numel();
    return n;
  }

  static CnnBlock create(ParameterStore& store, const std::string& prefix,
                         const std::vector<ConvLayerSpec>& specs, FeatureMap in,
                         Nonlinearity activation, Rng& rng) {
    cnn_output_extent(specs, in);
    CnnBlock block;
    block.activation = activation;
    std::size_t channels = in.channels;
    for (std::size_t k = 0; k < specs.size(); ++k) {
      const auto& s = specs[k];
      const std::string p = prefix + "." + std::to_string(k);
      ConvLayerParams layer;
      layer.spec = s;
      layer.kernels = store.add(p + ".kernels",
                                uniform_init({s.out_channels, channels, s.kernel_h, s.kernel_w},
                                             channels * s.kernel_h * s.kernel_w, rng));
      layer.bias = store.add(p + ".bias", Tensor::zeros({s.out_channels}));
      block.layers.push_back(std::move(layer));
      channels = s.out_channels;
    }
    return block;
  }

  static CnnBlock bind(const ParameterStore& store, const std::string& prefix,
                       const std::vector<ConvLayerSpec>& specs, Nonlinearity activation) {
    CnnBlock block;
    block.activation = activation;
    for (std::size_t k = 0; k < specs.size(); ++k) {
      const std::string p = prefix + "." + std::to_string(k);
      block.layers.push_back({specs[k], store.get(p + ".kernels"), store.get(p + ".bias")});
    }
    return block;
  }
};

/// Stacked context windows [B x C x frames x feat] (or unbatched [C x frames x feat])
/// through every conv layer, flattened to [B x flat].
inline Tensor cnn_block_forward(const CnnBlock& block, const Tensor& stacked_frames) {
  const bool batched = stacked_frames.rank() == 4;
  if (stacked_frames.rank() != 3 && !batched) {
    throw ConfigError("cnn block input must be [C x frames x feat] or batched, got " +
                      shape_string(stacked_frames.shape()));
  }
  const std::size_t off = batched ? 1 : 0;
  std::vector<ConvLayerSpec> specs;
  for (const auto& l : block.layers) specs.push_back(l.spec);
  cnn_output_extent(specs, {stacked_frames.shape()[off], stacked_frames.shape()[off + 1],
                            stacked_frames.shape()[off + 2]});
  Tensor x = stacked_frames;
  for (const auto& l : block.layers) {
    x = apply(block.activation,
              add_channel_bias(conv2d(x, l.kernels, {l.spec.stride, l.spec.same_padding}), l.bias));
  }
  const std::size_t batch = batched ? x.shape()[0] : 1;
  return reshape(x, {batch, x.numel() / batch});
}

}  // namespace bridgenet

#endif  // BRIDGENET_NN_HPP_

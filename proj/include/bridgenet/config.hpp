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

// Training configuration and its flat key=value text form. The canonical
// key=value listing doubles as the input of the configuration hash stored in
// checkpoints.

#ifndef BRIDGENET_CONFIG_HPP_
#define BRIDGENET_CONFIG_HPP_

#include <charconv>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bridgenet/data.hpp"
#include "bridgenet/errors.hpp"
#include "bridgenet/losses.hpp"
#include "bridgenet/recursive_net.hpp"

namespace bridgenet {

enum class TrainMode { kTeacher, kStudentKdBridges, kMultitaskDenoise, kBaseline };

inline std::string_view to_string(TrainMode m) {
  switch (m) {
    case TrainMode::kTeacher: return "teacher";
    case TrainMode::kStudentKdBridges: return "student_kd_bridges";
    case TrainMode::kMultitaskDenoise: return "multitask_denoise";
    case TrainMode::kBaseline: return "baseline";
  }
  return "?";
}

inline TrainMode parse_train_mode(std::string_view s) {
  if (s == "teacher") return TrainMode::kTeacher;
  if (s == "student_kd_bridges") return TrainMode::kStudentKdBridges;
  if (s == "multitask_denoise") return TrainMode::kMultitaskDenoise;
  if (s == "baseline") return TrainMode::kBaseline;
  throw ConfigError("unknown mode '" + std::string(s) + "'");
}

struct TrainConfig {
  TrainMode mode = TrainMode::kStudentKdBridges;
  double learning_rate = 0.05;
  double momentum = 0.9;
  std::size_t batch_size = 8;  // sequences per step
  std::size_t epochs = 10;
  std::uint64_t seed = 1;

  LossWeights weights;
  std::string preset = "KD+DR+LSTM3";
  double weight_kd = 0.3;
  double weight_dr = 0.2;
  double weight_lstm3 = 0.1;
  // Tap the bridges at this recursion instead of the last one.
  std::optional<std::size_t> bridge_recursion;
  Reduction reduction = Reduction::kMeanOverFrames;

  // Noise variances of an evenly split curriculum; empty trains on the
  // corpus' own noisy stream.
  std::vector<double> curriculum_variances;
  CorruptionConfig curriculum_base;

  RecursiveNetConfig net;
  std::size_t r_teacher = 2;
  std::size_t r_student = 1;
  std::size_t denoiser_hidden = 32;

  RecursiveNetConfig teacher_net() const {
    RecursiveNetConfig c = net;
    c.recursions = r_teacher;
    return c;
  }

  RecursiveNetConfig student_net() const {
    RecursiveNetConfig c = net;
    c.recursions = r_student;
    return c;
  }

  BridgeSpec bridge_spec() const {
    BridgeSpec spec = BridgeSpec::preset(preset);
    for (Bridge& b : spec.bridges) {
      const std::string c = bridge_component(b.tap);
      if (c == "kd") b.weight = weight_kd;
      if (c == "dr") b.weight = weight_dr;
      if (c == "lstm3") b.weight = weight_lstm3;
    }
    return spec;
  }

  std::optional<CurriculumSchedule> curriculum() const {
    if (curriculum_variances.empty()) return std::nullopt;
    return CurriculumSchedule::even(curriculum_variances, epochs, curriculum_base);
  }

  void validate() const {
    // lr = 0 is allowed as a frozen diagnostic run.
    if (!(learning_rate >= 0.0)) throw ConfigError("learning rate must be non-negative");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
    if (batch_size == 0) throw ConfigError("batch size must be >= 1");
    if (epochs == 0) throw ConfigError("epochs must be >= 1");
    weights.validate();
    bridge_spec().validate();
    if (bridge_recursion && (*bridge_recursion > r_teacher || *bridge_recursion > r_student)) {
      throw ConfigError("bridge recursion exceeds the teacher or student recursion count");
    }
    if (denoiser_hidden == 0) throw ConfigError("denoiser hidden size must be positive");
    teacher_net().validate();
    student_net().validate();
    curriculum();
  }
};

// ---------------------------------------------------------------------------
// key=value text

using KeyValues = std::vector<std::pair<std::string, std::string>>;

/// Parses "key=value" lines; blank lines and lines starting with '#' are skipped.
inline KeyValues parse_key_values(std::string_view text) {
  KeyValues out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
    }
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

inline std::pair<std::string, std::string> split_override(std::string_view text) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("override '" + std::string(text) + "' is not key=value");
  }
  return {std::string(text.substr(0, eq)), std::string(text.substr(eq + 1))};
}

namespace detail {

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* first = value.data();
  const char* last = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last) {
    throw ConfigError("bad value '" + value + "' for key '" + key + "'");
  }
  return out;
}

inline double parse_double(const std::string& key, const std::string& value) {
  return parse_number<double>(key, value);
}

inline std::size_t parse_size(const std::string& key, const std::string& value) {
  return parse_number<std::size_t>(key, value);
}

inline std::vector<double> parse_double_list(const std::string& key, const std::string& value) {
  std::vector<double> out;
  if (value.empty() || value == "none") return out;
  std::istringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(parse_double(key, item));
  return out;
}

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

// "8:3x3:same,8:3x1"
inline std::vector<ConvLayerSpec> parse_cnn(const std::string& key, const std::string& value) {
  std::vector<ConvLayerSpec> out;
  if (value.empty() || value == "none") return out;
  std::istringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) {
    ConvLayerSpec s;
    const auto c1 = item.find(':');
    const auto x = item.find('x', c1 == std::string::npos ? 0 : c1);
    if (c1 == std::string::npos || x == std::string::npos) {
      throw ConfigError("bad conv layer '" + item + "' for key '" + key + "'");
    }
    const auto c2 = item.find(':', x);
    s.out_channels = parse_size(key, item.substr(0, c1));
    s.kernel_h = parse_size(key, item.substr(c1 + 1, x - c1 - 1));
    s.kernel_w = parse_size(key, item.substr(x + 1, c2 == std::string::npos ? std::string::npos
                                                                           : c2 - x - 1));
    if (c2 != std::string::npos) {
      const std::string flag = item.substr(c2 + 1);
      if (flag != "same") throw ConfigError("bad conv flag '" + flag + "' for key '" + key + "'");
      s.same_padding = true;
    }
    out.push_back(s);
  }
  return out;
}

inline std::string format_cnn(const std::vector<ConvLayerSpec>& layers) {
  if (layers.empty()) return "none";
  std::string out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (i) out += ',';
    out += std::to_string(l.out_channels) + ':' + std::to_string(l.kernel_h) + 'x' +
           std::to_string(l.kernel_w) + (l.same_padding ? ":same" : "");
  }
  return out;
}

}  // namespace detail

/// Applies one key to the configuration. Unknown keys are a ConfigError.
inline void apply_key(TrainConfig& c, const std::string& key, const std::string& value) {
  using namespace detail;
  if (key == "mode") c.mode = parse_train_mode(value);
  else if (key == "lr") c.learning_rate = parse_double(key, value);
  else if (key == "momentum") c.momentum = parse_double(key, value);
  else if (key == "batch_size") c.batch_size = parse_size(key, value);
  else if (key == "epochs") c.epochs = parse_size(key, value);
  else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "alpha") c.weights.alpha = parse_double(key, value);
  else if (key == "tau") c.weights.tau = parse_double(key, value);
  else if (key == "weight.ce") c.weights.hard_label = parse_double(key, value);
  else if (key == "weight.kd") c.weight_kd = parse_double(key, value);
  else if (key == "weight.dr") c.weight_dr = parse_double(key, value);
  else if (key == "weight.lstm3") c.weight_lstm3 = parse_double(key, value);
  else if (key == "preset") {
    BridgeSpec::preset(value);
    c.preset = value;
  } else if (key == "bridge_recursion") {
    c.bridge_recursion = value == "last" ? std::nullopt
                                         : std::optional<std::size_t>(parse_size(key, value));
  } else if (key == "reduction") {
    if (value == "sum") c.reduction = Reduction::kSum;
    else if (value == "mean") c.reduction = Reduction::kMeanOverFrames;
    else throw ConfigError("reduction must be sum or mean");
  } else if (key == "curriculum") c.curriculum_variances = parse_double_list(key, value);
  else if (key == "curriculum.reverb_length") c.curriculum_base.reverb_length = parse_size(key, value);
  else if (key == "curriculum.reverb_decay") c.curriculum_base.reverb_decay = parse_double(key, value);
  else if (key == "curriculum.seed") c.curriculum_base.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "r_teacher") c.r_teacher = parse_size(key, value);
  else if (key == "r_student") c.r_student = parse_size(key, value);
  else if (key == "denoiser.hidden") c.denoiser_hidden = parse_size(key, value);
  else if (key == "net.classes") c.net.num_classes = parse_size(key, value);
  else if (key == "net.feat_dim") c.net.feat_dim = parse_size(key, value);
  else if (key == "net.context") c.net.context = parse_size(key, value);
  else if (key == "net.cnn") c.net.cnn = parse_cnn(key, value);
  else if (key == "net.cnn_activation") c.net.cnn_activation = parse_nonlinearity(value);
  else if (key == "net.embed") c.net.feedback_embed = parse_size(key, value);
  else if (key == "net.f_hidden") c.net.feedback_stack.hidden = parse_size(key, value);
  else if (key == "net.f_depth") c.net.feedback_stack.depth = parse_size(key, value);
  else if (key == "net.merge_width") c.net.merge_width = parse_size(key, value);
  else if (key == "net.merge_activation") c.net.merge_activation = parse_nonlinearity(value);
  else if (key == "net.l_hidden") c.net.output_stack.hidden = parse_size(key, value);
  else if (key == "net.l_depth") c.net.output_stack.depth = parse_size(key, value);
  else if (key == "net.feedback_signal") {
    if (value == "posterior") c.net.feedback_signal = FeedbackSignal::kPosterior;
    else if (value == "logits") c.net.feedback_signal = FeedbackSignal::kLogits;
    else throw ConfigError("net.feedback_signal must be posterior or logits");
  } else if (key == "net.gate_hidden") {
    if (value == "previous_frame") c.net.gate_hidden = GateHiddenSource::kPreviousFrame;
    else if (value == "previous_recursion") c.net.gate_hidden = GateHiddenSource::kPreviousRecursion;
    else throw ConfigError("net.gate_hidden must be previous_frame or previous_recursion");
  } else if (key == "net.forced_gate") {
    c.net.forced_gate = value == "none" ? std::nullopt
                                        : std::optional<double>(parse_double(key, value));
  } else {
    throw ConfigError("unknown configuration key '" + key + "'");
  }
}

inline void apply_key_values(TrainConfig& c, const KeyValues& kv) {
  for (const auto& [k, v] : kv) apply_key(c, k, v);
}

/// Every key with its resolved value, in a fixed order.
inline KeyValues to_key_values(const TrainConfig& c) {
  using detail::format_double;
  KeyValues kv;
  auto put = [&](std::string k, std::string v) { kv.emplace_back(std::move(k), std::move(v)); };
  put("mode", std::string(to_string(c.mode)));
  put("lr", format_double(c.learning_rate));
  put("momentum", format_double(c.momentum));
  put("batch_size", std::to_string(c.batch_size));
  put("epochs", std::to_string(c.epochs));
  put("seed", std::to_string(c.seed));
  put("alpha", format_double(c.weights.alpha));
  put("tau", format_double(c.weights.tau));
  put("weight.ce", format_double(c.weights.hard_label));
  put("weight.kd", format_double(c.weight_kd));
  put("weight.dr", format_double(c.weight_dr));
  put("weight.lstm3", format_double(c.weight_lstm3));
  put("preset", c.preset);
  put("bridge_recursion", c.bridge_recursion ? std::to_string(*c.bridge_recursion) : "last");
  put("reduction", c.reduction == Reduction::kSum ? "sum" : "mean");
  std::string cur;
  for (std::size_t i = 0; i < c.curriculum_variances.size(); ++i) {
    if (i) cur += ',';
    cur += format_double(c.curriculum_variances[i]);
  }
  put("curriculum", cur.empty() ? "none" : cur);
  put("curriculum.reverb_length", std::to_string(c.curriculum_base.reverb_length));
  put("curriculum.reverb_decay", format_double(c.curriculum_base.reverb_decay));
  put("curriculum.seed", std::to_string(c.curriculum_base.seed));
  put("r_teacher", std::to_string(c.r_teacher));
  put("r_student", std::to_string(c.r_student));
  put("denoiser.hidden", std::to_string(c.denoiser_hidden));
  put("net.classes", std::to_string(c.net.num_classes));
  put("net.feat_dim", std::to_string(c.net.feat_dim));
  put("net.context", std::to_string(c.net.context));
  put("net.cnn", detail::format_cnn(c.net.cnn));
  put("net.cnn_activation", std::string(to_string(c.net.cnn_activation)));
  put("net.embed", std::to_string(c.net.feedback_embed));
  put("net.f_hidden", std::to_string(c.net.feedback_stack.hidden));
  put("net.f_depth", std::to_string(c.net.feedback_stack.depth));
  put("net.merge_width", std::to_string(c.net.merge_width));
  put("net.merge_activation", std::string(to_string(c.net.merge_activation)));
  put("net.l_hidden", std::to_string(c.net.output_stack.hidden));
  put("net.l_depth", std::to_string(c.net.output_stack.depth));
  put("net.feedback_signal",
      c.net.feedback_signal == FeedbackSignal::kPosterior ? "posterior" : "logits");
  put("net.gate_hidden", c.net.gate_hidden == GateHiddenSource::kPreviousFrame
                             ? "previous_frame"
                             : "previous_recursion");
  put("net.forced_gate", c.net.forced_gate ? format_double(*c.net.forced_gate) : "none");
  return kv;
}

inline std::string format_key_values(const KeyValues& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

/// FNV-1a over the canonical key=value listing.
inline std::uint64_t config_hash(const TrainConfig& c) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : format_key_values(to_key_values(c))) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace bridgenet

#endif  // BRIDGENET_CONFIG_HPP_

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

// Synthetic (clean, noisy, label) triplets, feature-domain corruption, the
// curriculum schedule and the BNC1 corpus file format.

#ifndef BRIDGENET_DATA_HPP_
#define BRIDGENET_DATA_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bridgenet/binary_io.hpp"
#include "bridgenet/errors.hpp"
#include "bridgenet/random.hpp"
#include "bridgenet/tensor.hpp"

namespace bridgenet {

/// One utterance: clean frames x*, noisy frames x (both [T x D] row-major)
/// and a class label per frame.
struct Triplet {
  std::size_t frames = 0;
  std::size_t dim = 0;
  std::vector<float> clean;
  std::vector<float> noisy;
  std::vector<std::uint32_t> labels;

  std::span<const float> features(bool use_noisy) const { return use_noisy ? noisy : clean; }

  void validate(std::size_t num_classes) const {
    if (clean.size() != frames * dim || noisy.size() != frames * dim || labels.size() != frames) {
      throw ContractError("triplet streams disagree on frame count");
    }
    for (std::uint32_t y : labels) {
      if (y >= num_classes) throw ContractError("label " + std::to_string(y) + " out of range");
    }
  }

  bool operator==(const Triplet&) const = default;
};

struct Corpus {
  std::uint32_t num_classes = 0;
  std::uint32_t feat_dim = 0;
  std::uint64_t seed = 0;
  std::vector<Triplet> sequences;

  std::size_t total_frames() const {
    std::size_t n = 0;
    for (const auto& s : sequences) n += s.frames;
    return n;
  }

  bool operator==(const Corpus&) const = default;
};

// ---------------------------------------------------------------------------
// Clean corpus

struct CleanCorpusOptions {
  std::size_t num_classes = 8;
  std::size_t feat_dim = 16;
  std::size_t num_sequences = 200;
  std::size_t frames_per_sequence = 50;
  std::uint64_t seed = 1;
  double jitter = 0.1;
  double self_transition = 0.9;
  double prototype_scale = 1.0;
  // Prototypes are redrawn until every pair is at least this far apart.
  double min_separation = 1.0;
};

struct CleanCorpus {
  CleanCorpusOptions options;
  std::vector<float> prototypes;  // [K x D]
  std::vector<Triplet> sequences;  // noisy stream empty until corrupted
};

/// Class prototypes drawn N(0, scale^2), sticky Markov label chains and
/// prototype + N(0, jitter^2) frames. Sequence i uses a seed derived from
/// (seed, i), so sequences are independent of each other's sizes.
inline CleanCorpus generate_clean_corpus(const CleanCorpusOptions& opt) {
  if (opt.num_classes < 2 || opt.feat_dim < 2) {
    throw ConfigError("clean corpus needs at least 2 classes and 2 feature dimensions");
  }
  if (opt.frames_per_sequence == 0) throw ConfigError("sequences need at least one frame");
  if (!(opt.self_transition >= 0.0 && opt.self_transition <= 1.0) || opt.jitter < 0.0) {
    throw ConfigError("self-transition must lie in [0, 1] and jitter must be >= 0");
  }
  const std::size_t k = opt.num_classes, d = opt.feat_dim;
  CleanCorpus out;
  out.options = opt;

  Rng proto_rng(mix_seed(opt.seed, 0));
  constexpr int kMaxAttempts = 1000;
  for (int attempt = 0;; ++attempt) {
    if (attempt == kMaxAttempts) {
      throw ConfigError("cannot place prototypes with the requested separation");
    }
    std::vector<double> protos(k * d);
    for (double& v : protos) v = proto_rng.normal(0.0, opt.prototype_scale);
    bool separated = true;
    for (std::size_t a = 0; a < k && separated; ++a) {
      for (std::size_t b = a + 1; b < k && separated; ++b) {
        double dist2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          const double diff = protos[a * d + j] - protos[b * d + j];
          dist2 += diff * diff;
        }
        separated = std::sqrt(dist2) >= opt.min_separation;
      }
    }
    if (separated) {
      out.prototypes.assign(protos.begin(), protos.end());
      break;
    }
  }

  for (std::size_t s = 0; s < opt.num_sequences; ++s) {
    Rng rng(mix_seed(opt.seed, s + 1));
    Triplet t;
    t.frames = opt.frames_per_sequence;
    t.dim = d;
    t.clean.resize(t.frames * d);
    t.labels.resize(t.frames);
    std::uint32_t label = static_cast<std::uint32_t>(rng.below(k));
    for (std::size_t f = 0; f < t.frames; ++f) {
      if (f > 0 && rng.uniform() >= opt.self_transition) {
        // Jump to one of the other K - 1 classes.
        const auto step = static_cast<std::uint32_t>(1 + rng.below(k - 1));
        label = static_cast<std::uint32_t>((label + step) % k);
      }
      t.labels[f] = label;
      for (std::size_t j = 0; j < d; ++j) {
        const double base = out.prototypes[label * d + j];
        const double v = opt.jitter > 0.0 ? base + rng.normal(0.0, opt.jitter) : base;
        t.clean[f * d + j] = static_cast<float>(v);
      }
    }
    out.sequences.push_back(std::move(t));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Corruption

struct CorruptionConfig {
  double noise_variance = 0.5;
  std::size_t reverb_length = 2;
  double reverb_decay = 0.5;
  std::uint64_t seed = 7;

  void validate() const {
    if (!(noise_variance >= 0.0)) throw ConfigError("noise variance must be >= 0");
    if (reverb_length < 1) throw ConfigError("reverb filter length must be >= 1");
    if (!(reverb_decay >= 0.0 && reverb_decay < 1.0)) {
      throw ConfigError("reverb decay must lie in [0, 1)");
    }
  }

  bool operator==(const CorruptionConfig&) const = default;
};

/// Causal decaying filter along time, x_t = sum_j decay^j x*_{t-j} / sum_j decay^j
/// over the taps that exist, then additive N(0, noise_variance) per coordinate.
inline std::vector<float> corrupt(std::span<const float> clean, std::size_t frames, std::size_t dim,
                                  const CorruptionConfig& config) {
  config.validate();
  if (clean.size() != frames * dim) throw DimensionError("corrupt: feature buffer size mismatch");
  Rng rng(config.seed);
  const double stddev = std::sqrt(config.noise_variance);
  std::vector<float> out(clean.size());
  for (std::size_t t = 0; t < frames; ++t) {
    const std::size_t taps = std::min(config.reverb_length, t + 1);
    double norm = 0.0;
    double w = 1.0;
    for (std::size_t j = 0; j < taps; ++j, w *= config.reverb_decay) norm += w;
    for (std::size_t i = 0; i < dim; ++i) {
      double acc = 0.0;
      w = 1.0;
      for (std::size_t j = 0; j < taps; ++j, w *= config.reverb_decay) {
        acc += w * static_cast<double>(clean[(t - j) * dim + i]);
      }
      double v = acc / norm;
      if (stddev > 0.0) v += rng.normal(0.0, stddev);
      out[t * dim + i] = static_cast<float>(v);
    }
  }
  return out;
}

/// Replaces the noisy stream of every sequence.
inline void recorrupt(Corpus& corpus, const CorruptionConfig& config) {
  for (std::size_t s = 0; s < corpus.sequences.size(); ++s) {
    Triplet& t = corpus.sequences[s];
    CorruptionConfig c = config;
    c.seed = mix_seed(config.seed, s);
    t.noisy = corrupt(t.clean, t.frames, t.dim, c);
  }
}

/// Corrupts every sequence with a per-sequence seed derived from config.seed.
inline Corpus make_triplets(const CleanCorpus& clean, const CorruptionConfig& config) {
  Corpus corpus;
  corpus.num_classes = static_cast<std::uint32_t>(clean.options.num_classes);
  corpus.feat_dim = static_cast<std::uint32_t>(clean.options.feat_dim);
  corpus.seed = clean.options.seed;
  corpus.sequences = clean.sequences;
  recorrupt(corpus, config);
  return corpus;
}

/// First `count` sequences and the rest, sharing prototypes and noise streams.
inline std::pair<Corpus, Corpus> split_corpus(const Corpus& corpus, std::size_t count) {
  if (count > corpus.sequences.size()) {
    throw ContractError("cannot split " + std::to_string(count) + " sequences off a corpus of " +
                        std::to_string(corpus.sequences.size()));
  }
  Corpus head = corpus, tail = corpus;
  head.sequences.assign(corpus.sequences.begin(), corpus.sequences.begin() + static_cast<long>(count));
  tail.sequences.assign(corpus.sequences.begin() + static_cast<long>(count), corpus.sequences.end());
  return {std::move(head), std::move(tail)};
}

// ---------------------------------------------------------------------------
// Curriculum

class CurriculumSchedule {
 public:
  struct Stage {
    std::size_t first_epoch;
    std::size_t last_epoch;  // inclusive
    CorruptionConfig config;
  };

  /// Stages must start at epoch 0, be contiguous and never lower the noise variance.
  explicit CurriculumSchedule(std::vector<Stage> stages) : stages_(std::move(stages)) {
    if (stages_.empty()) throw ConfigError("curriculum needs at least one stage");
    std::size_t expected_first = 0;
    for (std::size_t i = 0; i < stages_.size(); ++i) {
      const Stage& s = stages_[i];
      s.config.validate();
      if (s.first_epoch != expected_first || s.last_epoch < s.first_epoch) {
        throw ConfigError("curriculum stage " + std::to_string(i) +
                          " does not continue the epoch range contiguously");
      }
      if (i > 0 && s.config.noise_variance < stages_[i - 1].config.noise_variance) {
        throw ConfigError("curriculum noise variance decreases at stage " + std::to_string(i));
      }
      expected_first = s.last_epoch + 1;
    }
  }

  /// Evenly split `epochs` across the given variances (earlier stages take the remainder).
  static CurriculumSchedule even(const std::vector<double>& variances, std::size_t epochs,
                                 CorruptionConfig base) {
    if (variances.empty() || epochs < variances.size()) {
      throw ConfigError("curriculum needs at least one epoch per stage");
    }
    std::vector<Stage> stages;
    std::size_t first = 0;
    for (std::size_t i = 0; i < variances.size(); ++i) {
      const std::size_t len = epochs / variances.size() + (i < epochs % variances.size() ? 1 : 0);
      CorruptionConfig c = base;
      c.noise_variance = variances[i];
      stages.push_back({first, first + len - 1, c});
      first += len;
    }
    return CurriculumSchedule(std::move(stages));
  }

  const std::vector<Stage>& stages() const noexcept { return stages_; }
  std::size_t total_epochs() const { return stages_.back().last_epoch + 1; }

  std::size_t stage_index(std::size_t epoch) const {
    for (std::size_t i = 0; i < stages_.size(); ++i) {
      if (epoch <= stages_[i].last_epoch) return i;
    }
    throw ContractError("epoch " + std::to_string(epoch) + " beyond the curriculum's " +
                        std::to_string(total_epochs()) + " epochs");
  }

 private:
  std::vector<Stage> stages_;
};

inline const CorruptionConfig& curriculum_configs(const CurriculumSchedule& schedule,
                                                  std::size_t epoch) {
  return schedule.stages()[schedule.stage_index(epoch)].config;
}

// ---------------------------------------------------------------------------
// Network input

/// Frame t of every sequence as a [B x D] tensor, for sequences of equal length.
inline std::vector<Tensor> frame_tensors(std::span<const Triplet* const> batch, bool use_noisy) {
  if (batch.empty()) throw ContractError("empty batch");
  const std::size_t frames = batch.front()->frames, dim = batch.front()->dim;
  for (const Triplet* t : batch) {
    if (t->frames != frames || t->dim != dim) {
      throw DimensionError("batched sequences must share frame count and dimension");
    }
  }
  std::vector<Tensor> out;
  out.reserve(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    std::vector<double> values;
    values.reserve(batch.size() * dim);
    for (const Triplet* t : batch) {
      auto x = t->features(use_noisy).subspan(f * dim, dim);
      values.insert(values.end(), x.begin(), x.end());
    }
    out.push_back(Tensor::matrix(batch.size(), dim, std::move(values)));
  }
  return out;
}

/// Context windows of 2c+1 frames around each frame (edges repeat-padded),
/// each [B x 1 x (2c+1) x D]. Differentiable in the frames.
inline std::vector<Tensor> stack_context(const std::vector<Tensor>& frames, std::size_t context) {
  std::vector<Tensor> out;
  out.reserve(frames.size());
  const std::ptrdiff_t last = static_cast<std::ptrdiff_t>(frames.size()) - 1;
  const auto c = static_cast<std::ptrdiff_t>(context);
  for (std::ptrdiff_t t = 0; t <= last; ++t) {
    std::vector<Tensor> parts;
    for (std::ptrdiff_t j = t - c; j <= t + c; ++j) {
      parts.push_back(frames[static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(j, 0, last))]);
    }
    const Tensor row = concat_cols(parts);
    out.push_back(reshape(row, {row.rows(), 1, 2 * context + 1, frames.front().cols()}));
  }
  return out;
}

/// Labels in the row order of collected taps: frame-major, then sequence.
inline std::vector<std::uint32_t> frame_major_labels(std::span<const Triplet* const> batch) {
  std::vector<std::uint32_t> out;
  const std::size_t frames = batch.front()->frames;
  out.reserve(frames * batch.size());
  for (std::size_t f = 0; f < frames; ++f) {
    for (const Triplet* t : batch) out.push_back(t->labels[f]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Corpus file
//
//   "BNC1" | version u32 | K u32 | D u32 | count u32 | seed u64
//   per sequence: T u32 | T*D f32 clean | T*D f32 noisy | T u32 labels
//   CRC32 u32 over every preceding byte
// All integers and floats little-endian.

inline constexpr std::uint32_t kCorpusVersion = 1;

inline std::vector<std::uint8_t> encode_corpus(const Corpus& corpus) {
  io::ByteWriter w;
  w.put_bytes("BNC1");
  w.put_u32(kCorpusVersion);
  w.put_u32(corpus.num_classes);
  w.put_u32(corpus.feat_dim);
  w.put_u32(static_cast<std::uint32_t>(corpus.sequences.size()));
  w.put_u64(corpus.seed);
  for (const Triplet& t : corpus.sequences) {
    t.validate(corpus.num_classes);
    if (t.dim != corpus.feat_dim) throw ContractError("sequence dimension differs from corpus");
    w.put_u32(static_cast<std::uint32_t>(t.frames));
    for (float v : t.clean) w.put_f32(v);
    for (float v : t.noisy) w.put_f32(v);
    for (std::uint32_t y : t.labels) w.put_u32(y);
  }
  w.put_crc();
  return w.bytes();
}

inline Corpus decode_corpus(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  if (r.get_bytes(4, "magic") != "BNC1") throw FormatError("bad corpus magic", 0);
  const std::size_t version_at = r.offset();
  if (r.get_u32("version") != kCorpusVersion) {
    throw FormatError("unsupported corpus version", version_at);
  }
  Corpus c;
  c.num_classes = r.get_u32("class count");
  c.feat_dim = r.get_u32("feature dimension");
  const std::uint32_t count = r.get_u32("sequence count");
  c.seed = r.get_u64("seed");
  for (std::uint32_t s = 0; s < count; ++s) {
    Triplet t;
    t.frames = r.get_u32("frame count");
    t.dim = c.feat_dim;
    const std::size_t n = t.frames * t.dim;
    if (r.remaining() < n * 8 + t.frames * 4) {
      throw FormatError("truncated sequence " + std::to_string(s), r.offset());
    }
    t.clean.resize(n);
    t.noisy.resize(n);
    t.labels.resize(t.frames);
    for (float& v : t.clean) v = r.get_f32("clean features");
    for (float& v : t.noisy) v = r.get_f32("noisy features");
    for (auto& y : t.labels) {
      const std::size_t at = r.offset();
      y = r.get_u32("labels");
      if (y >= c.num_classes) throw FormatError("label out of range", at);
    }
    c.sequences.push_back(std::move(t));
  }
  r.expect_crc_trailer();
  return c;
}

inline void write_corpus(const std::string& path, const Corpus& corpus) {
  io::write_file(path, encode_corpus(corpus));
}

inline Corpus read_corpus(const std::string& path) { return decode_corpus(io::read_file(path)); }

}  // namespace bridgenet

#endif  // BRIDGENET_DATA_HPP_

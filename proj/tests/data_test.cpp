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

#include "bridgenet/data.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <vector>

#include "bridgenet/errors.hpp"

namespace bridgenet {
namespace {

CleanCorpusOptions small_options() {
  CleanCorpusOptions o;
  o.num_classes = 4;
  o.feat_dim = 6;
  o.num_sequences = 10;
  o.frames_per_sequence = 12;
  o.seed = 3;
  return o;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("bridgenet_data_test_" + name);
}

std::size_t nearest_prototype(const CleanCorpus& c, std::span<const float> x) {
  const std::size_t k = c.options.num_classes, d = c.options.feat_dim;
  std::size_t best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < k; ++j) {
    double dist = 0.0;
    for (std::size_t i = 0; i < d; ++i) dist += std::pow(x[i] - c.prototypes[j * d + i], 2);
    if (dist < best_dist) best_dist = dist, best = j;
  }
  return best;
}

TEST(CleanCorpusTest, SameSeedIsBitIdentical) {
  const auto a = generate_clean_corpus(small_options());
  const auto b = generate_clean_corpus(small_options());
  EXPECT_EQ(a.prototypes, b.prototypes);
  EXPECT_EQ(a.sequences, b.sequences);
  auto other = small_options();
  other.seed = 4;
  EXPECT_NE(generate_clean_corpus(other).prototypes, a.prototypes);
}

TEST(CleanCorpusTest, ZeroJitterFramesArePrototypes) {
  auto o = small_options();
  o.jitter = 0.0;
  const auto c = generate_clean_corpus(o);
  for (const Triplet& s : c.sequences) {
    for (std::size_t t = 0; t < s.frames; ++t) {
      for (std::size_t i = 0; i < s.dim; ++i) {
        EXPECT_EQ(s.clean[t * s.dim + i], c.prototypes[s.labels[t] * s.dim + i]);
      }
    }
  }
}

TEST(CleanCorpusTest, PrototypesAreSeparated) {
  const auto c = generate_clean_corpus(CleanCorpusOptions{});
  const std::size_t k = 8, d = 16;
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a + 1; b < k; ++b) {
      double dist = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        dist += std::pow(c.prototypes[a * d + i] - c.prototypes[b * d + i], 2);
      }
      EXPECT_GE(std::sqrt(dist), 1.0);
    }
  }
}

TEST(CleanCorpusTest, SelfTransitionRate) {
  CleanCorpusOptions o;
  o.num_classes = 2;
  o.feat_dim = 2;
  o.num_sequences = 1;
  o.frames_per_sequence = 20000;
  const auto c = generate_clean_corpus(o);
  const auto& y = c.sequences[0].labels;
  std::size_t stays = 0;
  for (std::size_t t = 1; t < y.size(); ++t) stays += y[t] == y[t - 1];
  EXPECT_NEAR(static_cast<double>(stays) / static_cast<double>(y.size() - 1), 0.9, 0.02);
}

TEST(CleanCorpusTest, LabelsCoverClasses) {
  const auto c = generate_clean_corpus(CleanCorpusOptions{});
  std::vector<std::size_t> counts(8, 0);
  for (const auto& s : c.sequences) {
    for (auto y : s.labels) ++counts[y];
  }
  // Sticky chains over 10000 frames visit every class often.
  for (std::size_t n : counts) EXPECT_GT(n, 500u);
}

TEST(CleanCorpusTest, RejectsBadOptions) {
  auto o = small_options();
  o.num_classes = 1;
  EXPECT_THROW(generate_clean_corpus(o), ConfigError);
  o = small_options();
  o.self_transition = 1.5;
  EXPECT_THROW(generate_clean_corpus(o), ConfigError);
  o = small_options();
  o.min_separation = 100.0;
  EXPECT_THROW(generate_clean_corpus(o), ConfigError);
}

TEST(CorruptTest, IdentityWithoutNoiseOrReverb) {
  const std::vector<float> x{1, 2, 3, 4, 5, 6};
  CorruptionConfig c;
  c.noise_variance = 0.0;
  c.reverb_length = 1;
  EXPECT_EQ(corrupt(x, 3, 2, c), x);
}

TEST(CorruptTest, TwoTapReverb) {
  const std::vector<float> x{1, 2, 3, 4};
  CorruptionConfig c;
  c.noise_variance = 0.0;
  c.reverb_length = 2;
  c.reverb_decay = 0.5;
  const auto y = corrupt(x, 2, 2, c);
  EXPECT_EQ(y[0], 1.0f);
  EXPECT_EQ(y[1], 2.0f);
  EXPECT_FLOAT_EQ(y[2], static_cast<float>((3.0 + 0.5 * 1.0) / 1.5));
  EXPECT_FLOAT_EQ(y[3], static_cast<float>((4.0 + 0.5 * 2.0) / 1.5));
}

TEST(CorruptTest, NoiseVarianceMatches) {
  const std::size_t frames = 4000, dim = 4;
  std::vector<float> x(frames * dim);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(std::sin(0.01 * i));
  CorruptionConfig c;
  c.noise_variance = 4.0;
  c.reverb_length = 3;
  CorruptionConfig quiet = c;
  quiet.noise_variance = 0.0;
  const auto noisy = corrupt(x, frames, dim, c);
  const auto filtered = corrupt(x, frames, dim, quiet);
  for (std::size_t i = 0; i < dim; ++i) {
    double mean = 0.0, sq = 0.0;
    for (std::size_t t = 0; t < frames; ++t) {
      const double r = noisy[t * dim + i] - filtered[t * dim + i];
      mean += r;
      sq += r * r;
    }
    mean /= frames;
    const double var = sq / frames - mean * mean;
    EXPECT_NEAR(var, 4.0, 0.4);
  }
}

TEST(CorruptTest, RejectsBadConfig) {
  const std::vector<float> x{1, 2};
  CorruptionConfig c;
  c.reverb_decay = 1.0;
  EXPECT_THROW(corrupt(x, 1, 2, c), ConfigError);
  c = {};
  c.noise_variance = -1.0;
  EXPECT_THROW(corrupt(x, 1, 2, c), ConfigError);
  EXPECT_THROW(corrupt(x, 2, 2, CorruptionConfig{}), DimensionError);
}

TEST(TripletsTest, NearestPrototypeGap) {
  const auto clean = generate_clean_corpus(CleanCorpusOptions{});
  const Corpus corpus = make_triplets(clean, CorruptionConfig{});
  std::size_t right_clean = 0, right_noisy = 0, total = 0;
  for (const Triplet& s : corpus.sequences) {
    for (std::size_t t = 0; t < s.frames; ++t) {
      right_clean += nearest_prototype(clean, s.features(false).subspan(t * s.dim, s.dim)) == s.labels[t];
      right_noisy += nearest_prototype(clean, s.features(true).subspan(t * s.dim, s.dim)) == s.labels[t];
      ++total;
    }
  }
  const double acc_clean = static_cast<double>(right_clean) / total;
  const double acc_noisy = static_cast<double>(right_noisy) / total;
  EXPECT_GE(acc_clean, 0.95);
  EXPECT_LT(acc_noisy, acc_clean);
}

TEST(TripletsTest, RecorruptIsDeterministicAndKeepsClean) {
  const auto clean = generate_clean_corpus(small_options());
  Corpus a = make_triplets(clean, CorruptionConfig{});
  const Corpus b = make_triplets(clean, CorruptionConfig{});
  EXPECT_EQ(a, b);
  CorruptionConfig louder;
  louder.noise_variance = 2.0;
  recorrupt(a, louder);
  EXPECT_NE(a.sequences[0].noisy, b.sequences[0].noisy);
  EXPECT_EQ(a.sequences[0].clean, b.sequences[0].clean);
  // Sequences draw independent noise.
  EXPECT_NE(a.sequences[0].noisy[0] - a.sequences[0].clean[0],
            a.sequences[1].noisy[0] - a.sequences[1].clean[0]);
}

TEST(CurriculumTest, SingleStage) {
  CorruptionConfig c;
  c.noise_variance = 0.3;
  const CurriculumSchedule s({{0, 9, c}});
  for (std::size_t e = 0; e < 10; ++e) EXPECT_EQ(curriculum_configs(s, e), c);
  EXPECT_THROW(curriculum_configs(s, 10), ContractError);
}

TEST(CurriculumTest, StageLookup) {
  const auto s = CurriculumSchedule::even({0.1, 0.2, 0.4}, 6, CorruptionConfig{});
  ASSERT_EQ(s.stages().size(), 3u);
  EXPECT_EQ(s.stages()[1].first_epoch, 2u);
  EXPECT_EQ(s.stages()[1].last_epoch, 3u);
  EXPECT_DOUBLE_EQ(curriculum_configs(s, 3).noise_variance, 0.2);
  EXPECT_DOUBLE_EQ(curriculum_configs(s, 0).noise_variance, 0.1);
  EXPECT_DOUBLE_EQ(curriculum_configs(s, 5).noise_variance, 0.4);
}

TEST(CurriculumTest, RejectsNonMonotoneAndGaps) {
  EXPECT_THROW(CurriculumSchedule::even({0.4, 0.2}, 4, CorruptionConfig{}), ConfigError);
  CorruptionConfig a, b;
  a.noise_variance = 0.1;
  b.noise_variance = 0.2;
  EXPECT_THROW(CurriculumSchedule({{0, 1, a}, {3, 4, b}}), ConfigError);
  EXPECT_THROW(CurriculumSchedule({{1, 2, a}}), ConfigError);
  EXPECT_THROW(CurriculumSchedule({}), ConfigError);
  EXPECT_THROW(CurriculumSchedule::even({0.1, 0.2, 0.3}, 2, CorruptionConfig{}), ConfigError);
}

TEST(NetworkInputTest, ContextWindowsRepeatEdges) {
  Triplet t;
  t.frames = 3;
  t.dim = 2;
  t.clean = {1, 2, 3, 4, 5, 6};
  t.noisy = t.clean;
  t.labels = {0, 1, 0};
  const std::vector<const Triplet*> batch{&t};
  const auto windows = stack_context(frame_tensors(batch, false), 1);
  ASSERT_EQ(windows.size(), 3u);
  EXPECT_EQ(windows[0].shape(), (Shape{1, 1, 3, 2}));
  const std::vector<double> first(windows[0].data().begin(), windows[0].data().end());
  EXPECT_EQ(first, (std::vector<double>{1, 2, 1, 2, 3, 4}));
  const std::vector<double> last(windows[2].data().begin(), windows[2].data().end());
  EXPECT_EQ(last, (std::vector<double>{3, 4, 5, 6, 5, 6}));
  EXPECT_EQ(frame_major_labels(batch), (std::vector<std::uint32_t>{0, 1, 0}));
}

TEST(NetworkInputTest, FrameMajorOrder) {
  Triplet a, b;
  a.frames = b.frames = 2;
  a.dim = b.dim = 1;
  a.clean = a.noisy = {1, 2};
  b.clean = b.noisy = {3, 4};
  a.labels = {0, 1};
  b.labels = {2, 3};
  const std::vector<const Triplet*> batch{&a, &b};
  const auto frames = frame_tensors(batch, true);
  EXPECT_EQ(frames[1].at(0, 0), 2.0);
  EXPECT_EQ(frames[1].at(1, 0), 4.0);
  EXPECT_EQ(frame_major_labels(batch), (std::vector<std::uint32_t>{0, 2, 1, 3}));
}

TEST(SplitCorpusTest, KeepsOrderAndMetadata) {
  const Corpus corpus = make_triplets(generate_clean_corpus(small_options()), CorruptionConfig{});
  const auto [head, tail] = split_corpus(corpus, 2);
  ASSERT_EQ(head.sequences.size(), 2u);
  ASSERT_EQ(tail.sequences.size(), corpus.sequences.size() - 2);
  EXPECT_EQ(head.sequences[1], corpus.sequences[1]);
  EXPECT_EQ(tail.sequences[0], corpus.sequences[2]);
  EXPECT_EQ(tail.num_classes, corpus.num_classes);
  EXPECT_THROW(split_corpus(corpus, corpus.sequences.size() + 1), ContractError);
}

TEST(CorpusFileTest, RoundTrip) {
  const Corpus corpus = make_triplets(generate_clean_corpus(small_options()), CorruptionConfig{});
  const auto path = temp_path("round_trip.bnc");
  write_corpus(path.string(), corpus);
  EXPECT_EQ(read_corpus(path.string()), corpus);
  std::filesystem::remove(path);
}

TEST(CorpusFileTest, EmptyCorpusIsValid) {
  Corpus empty;
  empty.num_classes = 3;
  empty.feat_dim = 2;
  const auto bytes = encode_corpus(empty);
  const Corpus back = decode_corpus(bytes);
  EXPECT_EQ(back, empty);
  EXPECT_TRUE(back.sequences.empty());
}

TEST(CorpusFileTest, CorruptedMagicAndTruncation) {
  const Corpus corpus = make_triplets(generate_clean_corpus(small_options()), CorruptionConfig{});
  auto bytes = encode_corpus(corpus);
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_corpus(bad), FormatError);
  auto flipped = bytes;
  flipped[40] ^= 0x01;
  EXPECT_THROW(decode_corpus(flipped), FormatError);
  bytes.resize(bytes.size() / 2);
  try {
    decode_corpus(bytes);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_LE(e.offset(), bytes.size());
  }
  EXPECT_THROW(read_corpus(temp_path("does_not_exist.bnc").string()), IoError);
}

}  // namespace
}  // namespace bridgenet

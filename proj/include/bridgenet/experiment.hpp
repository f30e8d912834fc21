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

// Evaluation and the seeded ablation matrix behind the command-line tool.

#ifndef BRIDGENET_EXPERIMENT_HPP_
#define BRIDGENET_EXPERIMENT_HPP_

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "bridgenet/config.hpp"
#include "bridgenet/data.hpp"
#include "bridgenet/errors.hpp"
#include "bridgenet/parameters.hpp"
#include "bridgenet/recursive_net.hpp"
#include "bridgenet/training.hpp"

namespace bridgenet {

/// Fraction of frames whose last-recursion argmax posterior equals the label.
/// A denoiser store, when given, is applied to every frame first.
inline double frame_accuracy(const RecursiveNetConfig& config, const ParameterStore& store,
                             const Corpus& corpus, bool use_noisy,
                             const ParameterStore* denoiser = nullptr) {
  if (corpus.sequences.empty() || corpus.total_frames() == 0) {
    throw ContractError("frame_accuracy on an empty corpus slice");
  }
  if (config.num_classes != corpus.num_classes || config.feat_dim != corpus.feat_dim) {
    throw ConfigError("model expects K=" + std::to_string(config.num_classes) + ", D=" +
                      std::to_string(config.feat_dim) + " but the corpus has K=" +
                      std::to_string(corpus.num_classes) + ", D=" +
                      std::to_string(corpus.feat_dim));
  }
  const RecursiveNet net = RecursiveNet::bind(config, store);
  std::optional<Denoiser> front;
  if (denoiser) front = Denoiser::bind(*denoiser);
  NoGradGuard no_grad;
  std::vector<std::size_t> order(corpus.sequences.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::size_t correct = 0, frames = 0;
  for (const auto& batch : detail::make_batches(corpus, order, 16)) {
    auto inputs = frame_tensors(batch, use_noisy);
    if (front) {
      for (Tensor& x : inputs) x = (*front)(x);
    }
    const auto trace = unroll_forward(net, stack_context(inputs, config.context));
    const auto labels = frame_major_labels(batch);
    correct += detail::count_correct(concat_rows(trace.last().logits), labels);
    frames += labels.size();
  }
  return static_cast<double>(correct) / static_cast<double>(frames);
}

// ---------------------------------------------------------------------------
// Plans

struct PlanRun {
  std::string name;
  TrainMode mode = TrainMode::kStudentKdBridges;
  std::size_t r_teacher = 1;
  std::size_t r_student = 1;
  std::string preset = "KD+DR+LSTM3";
  std::vector<std::uint64_t> seeds;
  std::optional<std::size_t> bridge_recursion;
};

struct ExperimentPlan {
  TrainConfig base;  // everything not set per run
  std::vector<PlanRun> runs;

  void validate() const {
    if (runs.empty()) throw ConfigError("experiment plan has no runs");
    std::set<std::string> names;
    for (const PlanRun& r : runs) {
      if (r.name.empty() || r.name.find_first_of(",\n\r\"") != std::string::npos) {
        throw ConfigError("run name '" + r.name + "' is empty or holds CSV separators");
      }
      if (!names.insert(r.name).second) throw ConfigError("duplicate run name '" + r.name + "'");
      if (r.seeds.empty()) throw ConfigError("run '" + r.name + "' has no seeds");
      if (std::set<std::uint64_t>(r.seeds.begin(), r.seeds.end()).size() != r.seeds.size()) {
        throw ConfigError("run '" + r.name + "' repeats a seed");
      }
      if (r.mode == TrainMode::kTeacher) {
        throw ConfigError("teacher rows are emitted automatically; run '" + r.name +
                          "' cannot use mode=teacher");
      }
      BridgeSpec::preset(r.preset);
    }
  }

  /// baseline, KD, KD+DR and KD+DR+LSTM3 students over the same seeds.
  static ExperimentPlan ablation(TrainConfig base, std::vector<std::uint64_t> seeds) {
    ExperimentPlan plan;
    plan.base = std::move(base);
    for (const char* preset : {"baseline", "KD", "KD+DR", "KD+DR+LSTM3"}) {
      PlanRun run;
      run.name = preset;
      run.mode = std::string(preset) == "baseline" ? TrainMode::kBaseline
                                                   : TrainMode::kStudentKdBridges;
      run.r_teacher = plan.base.r_teacher;
      run.r_student = plan.base.r_student;
      run.preset = preset;
      run.seeds = seeds;
      plan.runs.push_back(std::move(run));
    }
    return plan;
  }
};

/// One line per run:
///   name: mode=... preset=... r_teacher=N r_student=N seeds=1,2,3 [bridge_recursion=N]
inline std::vector<PlanRun> parse_plan_runs(std::string_view text) {
  std::vector<PlanRun> runs;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream words(line);
    std::string head;
    if (!(words >> head)) continue;
    if (head.size() < 2 || head.back() != ':') {
      throw ConfigError("plan line " + std::to_string(lineno) + ": expected 'name:'");
    }
    PlanRun run;
    run.name = head.substr(0, head.size() - 1);
    std::string item;
    while (words >> item) {
      const auto [key, value] = split_override(item);
      if (key == "mode") run.mode = parse_train_mode(value);
      else if (key == "preset") run.preset = value;
      else if (key == "r_teacher") run.r_teacher = detail::parse_size(key, value);
      else if (key == "r_student") run.r_student = detail::parse_size(key, value);
      else if (key == "bridge_recursion") run.bridge_recursion = detail::parse_size(key, value);
      else if (key == "seeds") {
        std::istringstream list(value);
        std::string s;
        while (std::getline(list, s, ',')) run.seeds.push_back(detail::parse_size(key, s));
      } else {
        throw ConfigError("plan line " + std::to_string(lineno) + ": unknown key '" + key + "'");
      }
    }
    runs.push_back(std::move(run));
  }
  return runs;
}

// ---------------------------------------------------------------------------
// Metrics

struct MetricsRow {
  std::string run;
  std::string seed;  // a seed, or mean / min / max in the summary block
  std::string mode;
  std::size_t r_teacher = 0;
  std::size_t r_student = 0;
  std::string preset;
  double acc_clean = std::numeric_limits<double>::quiet_NaN();
  double acc_noisy = std::numeric_limits<double>::quiet_NaN();
  // Final-epoch loss components; NaN where the mode has no such term.
  double loss_ce = std::numeric_limits<double>::quiet_NaN();
  double loss_kd = std::numeric_limits<double>::quiet_NaN();
  double loss_dr = std::numeric_limits<double>::quiet_NaN();
  double loss_lstm3 = std::numeric_limits<double>::quiet_NaN();
  double loss_mse = std::numeric_limits<double>::quiet_NaN();
  double wall_s = 0.0;
  std::string error;

  bool is_summary() const { return seed == "mean" || seed == "min" || seed == "max"; }

  /// Equality ignoring wall time, NaN == NaN.
  bool same_metrics(const MetricsRow& o) const {
    auto eq = [](double a, double b) {
      return (std::isnan(a) && std::isnan(b)) || std::bit_cast<std::uint64_t>(a) ==
                                                     std::bit_cast<std::uint64_t>(b);
    };
    return run == o.run && seed == o.seed && mode == o.mode && r_teacher == o.r_teacher &&
           r_student == o.r_student && preset == o.preset && eq(acc_clean, o.acc_clean) &&
           eq(acc_noisy, o.acc_noisy) && eq(loss_ce, o.loss_ce) && eq(loss_kd, o.loss_kd) &&
           eq(loss_dr, o.loss_dr) && eq(loss_lstm3, o.loss_lstm3) && eq(loss_mse, o.loss_mse) &&
           error == o.error;
  }
};

inline constexpr const char* kMetricsHeader =
    "run,seed,mode,R_teacher,R_student,preset,acc_clean,acc_noisy,loss_ce,loss_kd,loss_dr,"
    "loss_lstm3,loss_mse,wall_s,error";

namespace detail {

inline std::string csv_number(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string csv_text(std::string s) {
  for (char& c : s) {
    if (c == ',' || c == '\n' || c == '\r') c = c == ',' ? ';' : ' ';
  }
  return s;
}

inline double csv_parse_number(const std::string& s) {
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw ConfigError("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("metrics CSV: bad number '" + s + "'");
  }
}

}  // namespace detail

inline std::string format_metrics_row(const MetricsRow& r) {
  using detail::csv_number;
  std::ostringstream out;
  out << detail::csv_text(r.run) << ',' << r.seed << ',' << r.mode << ',' << r.r_teacher << ','
      << r.r_student << ',' << r.preset << ',' << csv_number(r.acc_clean) << ','
      << csv_number(r.acc_noisy) << ',' << csv_number(r.loss_ce) << ',' << csv_number(r.loss_kd)
      << ',' << csv_number(r.loss_dr) << ',' << csv_number(r.loss_lstm3) << ','
      << csv_number(r.loss_mse) << ',' << csv_number(r.wall_s) << ','
      << detail::csv_text(r.error);
  return out.str();
}

inline std::string format_metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const MetricsRow& r : rows) out += format_metrics_row(r) + "\n";
  return out;
}

/// Parses every data line; repeated header lines (from appended files) are skipped.
inline std::vector<MetricsRow> parse_metrics_csv(std::string_view text) {
  std::vector<MetricsRow> rows;
  std::istringstream in{std::string(text)};
  std::string line;
  bool saw_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line == kMetricsHeader) {
      saw_header = true;
      continue;
    }
    if (!saw_header) throw ConfigError("metrics CSV: data before the schema line");
    std::vector<std::string> f;
    std::istringstream fields(line);
    std::string cell;
    while (std::getline(fields, cell, ',')) f.push_back(cell);
    if (line.back() == ',') f.emplace_back();
    if (f.size() != 15) {
      throw ConfigError("metrics CSV: expected 15 fields, got " + std::to_string(f.size()));
    }
    MetricsRow r;
    r.run = f[0];
    r.seed = f[1];
    r.mode = f[2];
    r.r_teacher = static_cast<std::size_t>(detail::csv_parse_number(f[3]));
    r.r_student = static_cast<std::size_t>(detail::csv_parse_number(f[4]));
    r.preset = f[5];
    r.acc_clean = detail::csv_parse_number(f[6]);
    r.acc_noisy = detail::csv_parse_number(f[7]);
    r.loss_ce = detail::csv_parse_number(f[8]);
    r.loss_kd = detail::csv_parse_number(f[9]);
    r.loss_dr = detail::csv_parse_number(f[10]);
    r.loss_lstm3 = detail::csv_parse_number(f[11]);
    r.loss_mse = detail::csv_parse_number(f[12]);
    r.wall_s = detail::csv_parse_number(f[13]);
    r.error = f[14];
    rows.push_back(std::move(r));
  }
  return rows;
}

/// Per-run mean / min / max over the successful per-seed rows, in order of
/// first appearance.
inline std::vector<MetricsRow> summarize(const std::vector<MetricsRow>& rows) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const MetricsRow*>> by_run;
  for (const MetricsRow& r : rows) {
    if (r.is_summary() || !r.error.empty()) continue;
    if (!by_run.count(r.run)) order.push_back(r.run);
    by_run[r.run].push_back(&r);
  }
  std::vector<MetricsRow> out;
  for (const std::string& name : order) {
    const auto& group = by_run[name];
    using Field = double MetricsRow::*;
    const Field fields[] = {&MetricsRow::acc_clean, &MetricsRow::acc_noisy, &MetricsRow::loss_ce,
                            &MetricsRow::loss_kd,   &MetricsRow::loss_dr,   &MetricsRow::loss_lstm3,
                            &MetricsRow::loss_mse,  &MetricsRow::wall_s};
    for (const char* stat : {"mean", "min", "max"}) {
      MetricsRow s = *group.front();
      s.seed = stat;
      s.error.clear();
      for (Field f : fields) {
        double acc = std::string(stat) == "mean" ? 0.0 : group.front()->*f;
        for (const MetricsRow* r : group) {
          const double v = r->*f;
          if (std::string(stat) == "mean") acc += v;
          else if (std::string(stat) == "min") acc = std::min(acc, v);
          else acc = std::max(acc, v);
        }
        if (std::string(stat) == "mean") acc /= static_cast<double>(group.size());
        s.*f = acc;
      }
      out.push_back(std::move(s));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Running a plan

struct PlanResult {
  std::vector<MetricsRow> rows;      // plan runs in plan order, seeds in listed order
  std::vector<MetricsRow> summary;
  std::vector<MetricsRow> teachers;  // one per (seed, R_teacher) the students used
  std::vector<std::string> warnings;
};

namespace detail {

inline void fill_components(MetricsRow& row, const TrainLog& log) {
  if (log.epochs.empty()) return;
  const auto& c = log.epochs.back().components;
  auto get = [&](const char* name, double& field) {
    if (auto it = c.find(name); it != c.end()) field = it->second;
  };
  get("ce", row.loss_ce);
  get("kd", row.loss_kd);
  get("dr", row.loss_dr);
  get("lstm3", row.loss_lstm3);
  get("mse", row.loss_mse);
}

// Runs jobs [0, n) on up to `jobs` threads.
inline void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t j = 0; j < jobs; ++j) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

inline double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace detail

/// Trains one teacher per (seed, R_teacher), then every (run, seed) student,
/// evaluating on the clean and noisy streams of `eval`. A failing run is
/// recorded in its row's error column and the rest proceed.
inline PlanResult run_plan(const ExperimentPlan& plan, const Corpus& train, const Corpus& eval,
                           std::size_t jobs = 1) {
  plan.validate();
  struct TeacherKey {
    std::uint64_t seed;
    std::size_t r;
    auto operator<=>(const TeacherKey&) const = default;
  };
  std::vector<TeacherKey> teacher_keys;
  for (const PlanRun& run : plan.runs) {
    if (run.mode != TrainMode::kStudentKdBridges) continue;
    for (std::uint64_t seed : run.seeds) {
      const TeacherKey key{seed, run.r_teacher};
      if (std::find(teacher_keys.begin(), teacher_keys.end(), key) == teacher_keys.end()) {
        teacher_keys.push_back(key);
      }
    }
  }
  std::sort(teacher_keys.begin(), teacher_keys.end());

  auto config_for = [&](const PlanRun* run, TrainMode mode, std::uint64_t seed, std::size_t r_t) {
    TrainConfig c = plan.base;
    c.mode = mode;
    c.seed = seed;
    c.r_teacher = r_t;
    if (run) {
      c.r_student = run->r_student;
      c.preset = run->preset;
      c.bridge_recursion = run->bridge_recursion;
    }
    return c;
  };

  PlanResult result;
  std::vector<MetricsRow> teacher_rows(teacher_keys.size());
  std::vector<std::optional<ParameterStore>> teachers(teacher_keys.size());
  detail::parallel_for(teacher_keys.size(), jobs, [&](std::size_t i) {
    const auto start = std::chrono::steady_clock::now();
    const TeacherKey key = teacher_keys[i];
    MetricsRow& row = teacher_rows[i];
    row.run = "teacher_R" + std::to_string(key.r);
    row.seed = std::to_string(key.seed);
    row.mode = std::string(to_string(TrainMode::kTeacher));
    row.r_teacher = key.r;
    row.r_student = key.r;
    row.preset = "baseline";
    try {
      const TrainConfig c = config_for(nullptr, TrainMode::kTeacher, key.seed, key.r);
      TrainResult t = train_teacher(c, train);
      row.acc_clean = frame_accuracy(c.teacher_net(), t.model, eval, false);
      row.acc_noisy = frame_accuracy(c.teacher_net(), t.model, eval, true);
      detail::fill_components(row, t.log);
      teachers[i] = std::move(t.model);
    } catch (const Error& e) {
      row.error = e.what();
    }
    row.wall_s = detail::seconds_since(start);
  });
  result.teachers = teacher_rows;

  struct Job {
    const PlanRun* run;
    std::uint64_t seed;
  };
  std::vector<Job> work;
  for (const PlanRun& run : plan.runs) {
    for (std::uint64_t seed : run.seeds) work.push_back({&run, seed});
  }
  std::vector<MetricsRow> rows(work.size());
  std::mutex warn_mutex;
  detail::parallel_for(work.size(), jobs, [&](std::size_t i) {
    const auto start = std::chrono::steady_clock::now();
    const PlanRun& run = *work[i].run;
    const std::uint64_t seed = work[i].seed;
    MetricsRow& row = rows[i];
    row.run = run.name;
    row.seed = std::to_string(seed);
    row.mode = std::string(to_string(run.mode));
    row.r_teacher = run.r_teacher;
    row.r_student = run.r_student;
    row.preset = run.preset;
    try {
      const TrainConfig c = config_for(&run, run.mode, seed, run.r_teacher);
      TrainResult s;
      if (run.mode == TrainMode::kMultitaskDenoise) {
        s = train_multitask(c, train);
      } else {
        const ParameterStore* teacher = nullptr;
        if (run.mode == TrainMode::kStudentKdBridges) {
          const auto it = std::find(teacher_keys.begin(), teacher_keys.end(),
                                    TeacherKey{seed, run.r_teacher});
          const auto& t = teachers[static_cast<std::size_t>(it - teacher_keys.begin())];
          if (!t) throw TrainingError("teacher for this seed failed to train");
          teacher = &*t;
        }
        s = train_student(c, train, teacher);
      }
      const ParameterStore* front = s.denoiser ? &*s.denoiser : nullptr;
      row.acc_clean = frame_accuracy(c.student_net(), s.model, eval, false, front);
      row.acc_noisy = frame_accuracy(c.student_net(), s.model, eval, true, front);
      detail::fill_components(row, s.log);
      if (!s.log.warnings.empty()) {
        std::lock_guard lock(warn_mutex);
        for (const auto& w : s.log.warnings) {
          result.warnings.push_back(run.name + "/" + row.seed + ": " + w);
        }
      }
    } catch (const Error& e) {
      row.error = e.what();
    }
    row.wall_s = detail::seconds_since(start);
  });
  result.rows = std::move(rows);
  std::sort(result.warnings.begin(), result.warnings.end());
  result.summary = summarize(result.rows);
  return result;
}

}  // namespace bridgenet

#endif  // BRIDGENET_EXPERIMENT_HPP_

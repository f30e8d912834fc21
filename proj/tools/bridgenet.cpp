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

// bridgenet: corpus generation, training, evaluation and ablation plans.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "bridgenet/bridgenet.hpp"

namespace {

using namespace bridgenet;

constexpr int kExitConfig = 2;
constexpr int kExitTraining = 3;
constexpr int kExitIo = 4;

// Corpus generation keys live next to the training keys in one flat file.
struct CorpusSettings {
  std::uint64_t seed = 1;
  std::size_t sequences = 200;
  std::size_t eval_sequences = 50;
  std::size_t frames = 50;
  double jitter = 0.1;
  double self_transition = 0.9;
  double prototype_scale = 1.0;
  double min_separation = 1.0;
  CorruptionConfig noise;

  bool apply(const std::string& key, const std::string& value) {
    using detail::parse_double;
    using detail::parse_size;
    if (key == "corpus.seed") seed = detail::parse_number<std::uint64_t>(key, value);
    else if (key == "corpus.sequences") sequences = parse_size(key, value);
    else if (key == "corpus.eval_sequences") eval_sequences = parse_size(key, value);
    else if (key == "corpus.frames") frames = parse_size(key, value);
    else if (key == "corpus.jitter") jitter = parse_double(key, value);
    else if (key == "corpus.self_transition") self_transition = parse_double(key, value);
    else if (key == "corpus.prototype_scale") prototype_scale = parse_double(key, value);
    else if (key == "corpus.min_separation") min_separation = parse_double(key, value);
    else if (key == "noise.variance") noise.noise_variance = parse_double(key, value);
    else if (key == "noise.reverb_length") noise.reverb_length = parse_size(key, value);
    else if (key == "noise.reverb_decay") noise.reverb_decay = parse_double(key, value);
    else if (key == "noise.seed") noise.seed = detail::parse_number<std::uint64_t>(key, value);
    else return false;
    return true;
  }

  KeyValues to_key_values() const {
    using detail::format_double;
    return {{"corpus.seed", std::to_string(seed)},
            {"corpus.sequences", std::to_string(sequences)},
            {"corpus.eval_sequences", std::to_string(eval_sequences)},
            {"corpus.frames", std::to_string(frames)},
            {"corpus.jitter", format_double(jitter)},
            {"corpus.self_transition", format_double(self_transition)},
            {"corpus.prototype_scale", format_double(prototype_scale)},
            {"corpus.min_separation", format_double(min_separation)},
            {"noise.variance", format_double(noise.noise_variance)},
            {"noise.reverb_length", std::to_string(noise.reverb_length)},
            {"noise.reverb_decay", format_double(noise.reverb_decay)},
            {"noise.seed", std::to_string(noise.seed)}};
  }
};

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
  std::string out;
  std::vector<std::string> overrides;

  std::string corpus;
  std::string eval;
  std::string eval_out;
  std::string teacher;
  std::string model;
  std::string plan;
  std::string seeds = "1,2,3,4,5";
  std::string checkpoint;
  std::string resume;
  std::optional<std::size_t> stop_after;
};

struct Resolved {
  TrainConfig train;
  CorpusSettings corpus;
};

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out || !(out << text) || !out.flush()) throw IoError("cannot write '" + path + "'");
}

// Config file, then overrides in command-line order, then --seed.
Resolved resolve(const Options& o, const std::vector<std::string>& extra, bool seed_is_corpus) {
  Resolved r;
  KeyValues kv;
  if (!o.config_path.empty()) kv = parse_key_values(read_text(o.config_path));
  for (const auto& s : o.overrides) kv.push_back(split_override(s));
  for (const auto& s : extra) {
    if (!s.starts_with("--")) throw ConfigError("unexpected argument '" + s + "'");
    kv.push_back(split_override(s.substr(2)));
  }
  for (const auto& [k, v] : kv) {
    if (!r.corpus.apply(k, v)) apply_key(r.train, k, v);
  }
  if (o.seed) (seed_is_corpus ? r.corpus.seed : r.train.seed) = *o.seed;
  return r;
}

std::string resolved_text(const Resolved& r) {
  return format_key_values(to_key_values(r.train)) + format_key_values(r.corpus.to_key_values());
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw ConfigError(std::string("missing required option ") + flag);
}

void print_log(const TrainLog& log) {
  for (const auto& w : log.warnings) std::cerr << "warning: " << w << "\n";
  for (const EpochLog& e : log.epochs) {
    std::printf("epoch %zu stage %zu loss %.6f acc %.4f", e.epoch, e.stage, e.loss, e.accuracy);
    for (const auto& [name, v] : e.components) std::printf(" %s %.6f", name.c_str(), v);
    std::printf("\n");
  }
}

TrainHooks make_hooks(const Options& o) {
  TrainHooks hooks;
  if (!o.resume.empty()) hooks.resume = load_checkpoint(o.resume);
  hooks.stop_after_epochs = o.stop_after;
  if (!o.checkpoint.empty()) {
    const std::string path = o.checkpoint;
    hooks.on_epoch_end = [path](const Checkpoint& ck) { save_checkpoint(path, ck); };
  }
  return hooks;
}

RecursiveNetConfig eval_net(const TrainConfig& c) {
  return c.mode == TrainMode::kTeacher ? c.teacher_net() : c.student_net();
}

// Writes the model, its resolved config and a one-row metrics CSV.
void finish_training(const Options& o, const Resolved& r, const TrainResult& result,
                     const Corpus& train, double wall_s) {
  Checkpoint ck;
  ck.stores.push_back(result.model.clone());
  if (result.denoiser) ck.stores.push_back(result.denoiser->clone());
  ck.config_hash = config_hash(r.train);
  ck.epoch = static_cast<std::uint32_t>(r.train.epochs);
  save_checkpoint(o.out, ck);
  write_text(o.out + ".config", resolved_text(r));

  const Corpus eval = o.eval.empty() ? train : read_corpus(o.eval);
  const ParameterStore* front = result.denoiser ? &*result.denoiser : nullptr;
  MetricsRow row;
  row.run = std::string(to_string(r.train.mode));
  row.seed = std::to_string(r.train.seed);
  row.mode = row.run;
  row.r_teacher = r.train.r_teacher;
  row.r_student = r.train.mode == TrainMode::kTeacher ? r.train.r_teacher : r.train.r_student;
  row.preset = r.train.mode == TrainMode::kStudentKdBridges ? r.train.preset : "baseline";
  row.acc_clean = frame_accuracy(eval_net(r.train), result.model, eval, false, front);
  row.acc_noisy = frame_accuracy(eval_net(r.train), result.model, eval, true, front);
  detail::fill_components(row, result.log);
  row.wall_s = wall_s;
  write_text(o.out + ".metrics.csv", format_metrics_csv({row}));
  std::printf("acc_clean %.6f acc_noisy %.6f\n", row.acc_clean, row.acc_noisy);
}

int gen_corpus(const Options& o, const std::vector<std::string>& extra) {
  require(o.out, "--out");
  const Resolved r = resolve(o, extra, true);
  CleanCorpusOptions opt;
  opt.num_classes = r.train.net.num_classes;
  opt.feat_dim = r.train.net.feat_dim;
  opt.num_sequences = r.corpus.sequences + r.corpus.eval_sequences;
  opt.frames_per_sequence = r.corpus.frames;
  opt.seed = r.corpus.seed;
  opt.jitter = r.corpus.jitter;
  opt.self_transition = r.corpus.self_transition;
  opt.prototype_scale = r.corpus.prototype_scale;
  opt.min_separation = r.corpus.min_separation;
  const Corpus all = make_triplets(generate_clean_corpus(opt), r.corpus.noise);
  const auto [train, eval] = split_corpus(all, r.corpus.sequences);
  write_corpus(o.out, train);
  if (r.corpus.eval_sequences > 0) {
    write_corpus(o.eval_out.empty() ? o.out + ".eval" : o.eval_out, eval);
  }
  write_text(o.out + ".config", resolved_text(r));
  std::printf("wrote %zu training and %zu evaluation sequences\n", train.sequences.size(),
              eval.sequences.size());
  return 0;
}

int train(const Options& o, const std::vector<std::string>& extra, TrainMode mode) {
  require(o.corpus, "--corpus");
  require(o.out, "--out");
  Resolved r = resolve(o, extra, false);
  // train-student also runs the baseline when the config asks for mode=baseline.
  if (!(mode == TrainMode::kStudentKdBridges && r.train.mode == TrainMode::kBaseline)) {
    r.train.mode = mode;
  }
  r.train.validate();
  const Corpus corpus = read_corpus(o.corpus);
  const TrainHooks hooks = make_hooks(o);
  const auto start = std::chrono::steady_clock::now();
  TrainResult result;
  if (r.train.mode == TrainMode::kTeacher) {
    result = train_teacher(r.train, corpus, hooks);
  } else if (r.train.mode == TrainMode::kMultitaskDenoise) {
    result = train_multitask(r.train, corpus, hooks);
  } else {
    std::optional<Checkpoint> teacher;
    if (r.train.mode == TrainMode::kStudentKdBridges) {
      require(o.teacher, "--teacher");
      teacher = load_checkpoint(o.teacher);
    }
    result = train_student(r.train, corpus,
                           teacher ? &teacher->store(StoreRole::kTeacher) : nullptr, hooks);
  }
  print_log(result.log);
  finish_training(o, r, result, corpus, detail::seconds_since(start));
  return 0;
}

int eval(const Options& o, const std::vector<std::string>& extra) {
  require(o.model, "--model");
  require(o.corpus, "--corpus");
  Options with_config = o;
  if (with_config.config_path.empty()) with_config.config_path = o.model + ".config";
  const Resolved r = resolve(with_config, extra, false);
  const Checkpoint ck = load_checkpoint(o.model, config_hash(r.train));
  const ParameterStore* model = nullptr;
  const ParameterStore* front = nullptr;
  for (const ParameterStore& s : ck.stores) {
    (s.role() == StoreRole::kDenoiser ? front : model) = &s;
  }
  if (!model) throw FormatError("checkpoint holds no recognizer", 0);
  const Corpus corpus = read_corpus(o.corpus);
  const double clean = frame_accuracy(eval_net(r.train), *model, corpus, false, front);
  const double noisy = frame_accuracy(eval_net(r.train), *model, corpus, true, front);
  std::printf("acc_clean %.6f acc_noisy %.6f\n", clean, noisy);
  if (!o.out.empty()) {
    MetricsRow row;
    row.run = "eval";
    row.seed = std::to_string(r.train.seed);
    row.mode = std::string(to_string(r.train.mode));
    row.r_teacher = r.train.r_teacher;
    row.r_student = eval_net(r.train).recursions;
    row.preset = r.train.preset;
    row.acc_clean = clean;
    row.acc_noisy = noisy;
    write_text(o.out, format_metrics_csv({row}));
  }
  return 0;
}

int run_plan_command(const Options& o, const std::vector<std::string>& extra) {
  require(o.corpus, "--corpus");
  require(o.eval, "--eval");
  require(o.out, "--out");
  const Resolved r = resolve(o, extra, false);
  ExperimentPlan plan;
  if (o.plan.empty()) {
    std::vector<std::uint64_t> seeds;
    for (double s : detail::parse_double_list("--seeds", o.seeds)) {
      seeds.push_back(static_cast<std::uint64_t>(s));
    }
    plan = ExperimentPlan::ablation(r.train, seeds);
  } else {
    plan.base = r.train;
    plan.runs = parse_plan_runs(read_text(o.plan));
  }
  plan.validate();
  const Corpus train = read_corpus(o.corpus);
  const Corpus eval = read_corpus(o.eval);
  const PlanResult result = run_plan(plan, train, eval, o.jobs);
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";

  std::vector<MetricsRow> all = result.rows;
  all.insert(all.end(), result.summary.begin(), result.summary.end());
  write_text(o.out, format_metrics_csv(all));
  write_text(o.out + ".teachers.csv", format_metrics_csv(result.teachers));
  write_text(o.out + ".config", resolved_text(r));
  std::size_t failed = 0;
  for (const MetricsRow& row : result.rows) failed += !row.error.empty();
  for (const MetricsRow& row : result.summary) {
    if (row.seed == "mean") {
      std::printf("%-16s acc_clean %.4f acc_noisy %.4f\n", row.run.c_str(), row.acc_clean,
                  row.acc_noisy);
    }
  }
  if (failed) std::fprintf(stderr, "%zu of %zu runs failed\n", failed, result.rows.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Recursive recognizer with teacher-student bridges"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "key=value configuration file");
    sub->add_option("--seed", o.seed, "Seed (the corpus seed for gen-corpus)");
    sub->add_option("--out", o.out, "Output path");
    sub->add_option("--override", o.overrides, "key=value, repeatable; --key=value also works")
        ->take_all();
    sub->allow_extras();
  };

  auto* gen = app.add_subcommand("gen-corpus", "Generate training and evaluation corpora");
  common(gen);
  gen->add_option("--eval-out", o.eval_out, "Evaluation split (default: <out>.eval)");

  auto train_options = [&](CLI::App* sub) {
    common(sub);
    sub->add_option("--corpus", o.corpus, "Training corpus");
    sub->add_option("--eval", o.eval, "Corpus for the final metrics (default: training corpus)");
    sub->add_option("--checkpoint", o.checkpoint, "Write a checkpoint after every epoch");
    sub->add_option("--resume", o.resume, "Resume from a checkpoint");
    sub->add_option("--stop-after", o.stop_after, "Stop after this many epochs of this run");
  };
  auto* teacher = app.add_subcommand("train-teacher", "Train a teacher on clean features");
  train_options(teacher);
  auto* student = app.add_subcommand("train-student", "Train a student or a baseline");
  train_options(student);
  student->add_option("--teacher", o.teacher, "Teacher model (not needed for mode=baseline)");
  auto* multitask = app.add_subcommand("train-multitask", "Train a denoiser and recognizer jointly");
  train_options(multitask);

  auto* ev = app.add_subcommand("eval", "Frame accuracy of a trained model");
  common(ev);
  ev->add_option("--model", o.model, "Model file (its .config is read unless --config is given)");
  ev->add_option("--corpus", o.corpus, "Corpus to evaluate on");

  auto* plan = app.add_subcommand("run-plan", "Train and evaluate an experiment plan");
  common(plan);
  plan->add_option("--jobs", o.jobs, "Concurrent runs")->check(CLI::PositiveNumber);
  plan->add_option("--corpus", o.corpus, "Training corpus");
  plan->add_option("--eval", o.eval, "Evaluation corpus");
  plan->add_option("--plan", o.plan, "Plan file (default: the four-preset ablation)");
  plan->add_option("--seeds", o.seeds, "Seeds for the default ablation");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    const std::vector<std::string> extra = sub->remaining();
    if (sub == gen) return gen_corpus(o, extra);
    if (sub == teacher) return train(o, extra, TrainMode::kTeacher);
    if (sub == student) return train(o, extra, TrainMode::kStudentKdBridges);
    if (sub == multitask) return train(o, extra, TrainMode::kMultitaskDenoise);
    if (sub == ev) return eval(o, extra);
    return run_plan_command(o, extra);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DomainError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const Error& e) {
    std::cerr << "training failure: " << e.what() << "\n";
    return kExitTraining;
  }
}

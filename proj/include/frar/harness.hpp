#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "frar/error.hpp"
#include "frar/generator.hpp"
#include "frar/len.hpp"
#include "frar/rng.hpp"
#include "frar/teacher.hpp"

// Binds generator, student, and teacher into reproducible experiments:
// the FRAR loop, fixed-trajectory schedules, the uniform baseline, and
// distraction sweeps, with metrics logging.

namespace frar {

// ---------------------------------------------------------------------------
// Schedules

struct SchedulePhase {
  std::string label;            // the token that produced this phase, e.g. "1+2"
  std::vector<double> weights;  // per-class mixture, sums to 1
  int steps = 0;                // student optimizer steps in this phase
};

struct Schedule {
  std::vector<SchedulePhase> phases;

  int total_steps() const {
    int s = 0;
    for (const auto& p : phases) s += p.steps;
    return s;
  }

  // Parses trajectories like "1->2->1+2" (classes are 1-indexed). Phases
  // split `total_steps` equally; the remainder goes to the last phase.
  static Schedule parse(const std::string& text, int num_classes, int total_steps) {
    if (num_classes <= 0) throw std::invalid_argument("schedule: need at least one class");
    if (total_steps <= 0) throw std::invalid_argument("schedule: step budget must be positive");
    std::vector<std::string> tokens;
    std::size_t pos = 0;
    while (true) {
      const std::size_t arrow = text.find("->", pos);
      tokens.push_back(text.substr(pos, arrow == std::string::npos ? arrow : arrow - pos));
      if (arrow == std::string::npos) break;
      pos = arrow + 2;
    }
    Schedule sched;
    for (const auto& token : tokens) {
      if (token.empty()) throw std::invalid_argument("schedule: empty phase in '" + text + "'");
      SchedulePhase phase;
      phase.label = token;
      phase.weights.assign(static_cast<std::size_t>(num_classes), 0.0);
      std::vector<int> classes;
      std::stringstream ss(token);
      std::string part;
      while (std::getline(ss, part, '+')) {
        std::size_t used = 0;
        int cls = 0;
        try {
          cls = std::stoi(part, &used);
        } catch (const std::exception&) {
          throw std::invalid_argument("schedule: '" + part + "' is not a class number");
        }
        if (used != part.size())
          throw std::invalid_argument("schedule: '" + part + "' is not a class number");
        if (cls < 1 || cls > num_classes)
          throw std::invalid_argument("schedule: class " + part + " outside 1.." +
                                      std::to_string(num_classes));
        if (std::find(classes.begin(), classes.end(), cls) != classes.end())
          throw std::invalid_argument("schedule: class " + part + " repeated in '" + token + "'");
        classes.push_back(cls);
      }
      for (int cls : classes)
        phase.weights[static_cast<std::size_t>(cls - 1)] =
            1.0 / static_cast<double>(classes.size());
      sched.phases.push_back(std::move(phase));
    }
    const int per = total_steps / static_cast<int>(sched.phases.size());
    if (per == 0) throw std::invalid_argument("schedule: more phases than steps");
    for (auto& p : sched.phases) p.steps = per;
    sched.phases.back().steps += total_steps - per * static_cast<int>(sched.phases.size());
    return sched;
  }
};

inline Schedule uniform_schedule(int num_classes, int total_steps) {
  std::string token;
  for (int c = 1; c <= num_classes; ++c) token += (c > 1 ? "+" : "") + std::to_string(c);
  return Schedule::parse(token, num_classes, total_steps);
}

// ---------------------------------------------------------------------------
// Run configuration and pools

struct HarnessConfig {
  GeneratorConfig generator;
  LenConfig student;
  DdpgConfig teacher;
  int batch_size = 16;
  int teacher_interval = 10;  // student optimizer steps per teacher action
  int total_steps = 1000;     // student optimizer steps in the whole run
  int train_per_class = 2000;
  int val_per_class = 200;
  int test_per_class = 200;
  double student_lr = 1e-3;
  bool terminal_reward_only = false;  // reward only at the episode's last step
  std::uint64_t seed = 0;
};

inline void validate_config(const HarnessConfig& cfg) {
  validate_config(cfg.generator);
  validate_config(cfg.teacher);
  if (cfg.batch_size <= 0) throw std::invalid_argument("harness: batch size must be positive");
  if (cfg.teacher_interval <= 0)
    throw std::invalid_argument("harness: teacher interval must be positive");
  if (cfg.total_steps <= 0) throw std::invalid_argument("harness: total steps must be positive");
  if (cfg.total_steps % cfg.teacher_interval != 0)
    throw std::invalid_argument("harness: total steps must be a multiple of the teacher interval");
  if (cfg.train_per_class <= 0 || cfg.val_per_class <= 0 || cfg.test_per_class <= 0)
    throw std::invalid_argument("harness: pool sizes must be positive");
  if (cfg.student_lr <= 0.0) throw std::invalid_argument("harness: learning rate must be positive");
}

// Train, validation, and test puzzles per class. Each puzzle is generated
// from a seed derived from (master seed, split tag, class, index), so the
// three splits are disjoint by construction.
struct ClassPools {
  std::vector<std::vector<Puzzle>> train;
  std::vector<std::vector<Puzzle>> val;
  std::vector<std::vector<Puzzle>> test;
};

namespace detail {

constexpr std::uint64_t kTrainSplit = 0x747261696e;  // "train"
constexpr std::uint64_t kValSplit = 0x76616c;        // "val"
constexpr std::uint64_t kTestSplit = 0x74657374;     // "test"

inline std::vector<std::vector<Puzzle>> generate_split(const GeneratorConfig& gcfg,
                                                       std::uint64_t master,
                                                       std::uint64_t split_tag, int per_class) {
  std::vector<std::vector<Puzzle>> pools(gcfg.categories.size());
  for (std::size_t c = 0; c < gcfg.categories.size(); ++c) {
    pools[c].reserve(static_cast<std::size_t>(per_class));
    for (int i = 0; i < per_class; ++i) {
      Rng rng(derive_seed(master, split_tag, c, static_cast<std::uint64_t>(i)));
      pools[c].push_back(generate_puzzle(gcfg, static_cast<int>(c), rng));
    }
  }
  return pools;
}

}  // namespace detail

inline ClassPools build_pools(const HarnessConfig& cfg) {
  validate_config(cfg);
  ClassPools pools;
  pools.train = detail::generate_split(cfg.generator, cfg.seed, detail::kTrainSplit,
                                       cfg.train_per_class);
  pools.val = detail::generate_split(cfg.generator, cfg.seed, detail::kValSplit,
                                     cfg.val_per_class);
  pools.test = detail::generate_split(cfg.generator, cfg.seed, detail::kTestSplit,
                                      cfg.test_per_class);
  return pools;
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvalResult {
  std::vector<double> per_class;      // accuracy per class (0 for empty classes)
  std::vector<std::size_t> counts;    // puzzles evaluated per class
  double overall = 0.0;
  std::vector<bool> correct;          // per puzzle, class-major order
};

inline EvalResult evaluate(const LenModel& model,
                           const std::vector<std::vector<Puzzle>>& pool) {
  EvalResult res;
  std::size_t total = 0, hits = 0;
  for (const auto& cls : pool) {
    std::size_t ok = 0;
    for (const auto& pz : cls) {
      const bool hit = model.predict(pz) == pz.answer;
      res.correct.push_back(hit);
      ok += hit ? 1 : 0;
    }
    res.counts.push_back(cls.size());
    res.per_class.push_back(cls.empty() ? 0.0
                                        : static_cast<double>(ok) /
                                              static_cast<double>(cls.size()));
    total += cls.size();
    hits += ok;
  }
  if (total == 0) throw EmptyPool("evaluate: no puzzles in any class");
  res.overall = static_cast<double>(hits) / static_cast<double>(total);
  return res;
}

// ---------------------------------------------------------------------------
// Batch sampling

// B independent draws: class ~ Categorical(action), puzzle uniform within
// the class pool. Returns (class, index-within-class) pairs.
inline std::vector<std::pair<int, std::size_t>> sample_batch(
    const Action& action, const std::vector<std::vector<Puzzle>>& train, int batch_size,
    Rng& rng) {
  if (action.size() != train.size())
    throw std::invalid_argument("sample_batch: action width does not match class count");
  double sum = 0.0;
  for (std::size_t c = 0; c < action.size(); ++c) {
    if (action[c] < 0.0) throw std::invalid_argument("sample_batch: negative class weight");
    if (action[c] > 0.0 && train[c].empty())
      throw EmptyCategory("sample_batch: class " + std::to_string(c + 1) +
                          " has weight " + std::to_string(action[c]) + " but no puzzles");
    sum += action[c];
  }
  if (std::fabs(sum - 1.0) > 1e-6)
    throw std::invalid_argument("sample_batch: action must sum to 1");

  std::size_t last_positive = action.size();
  for (std::size_t c = 0; c < action.size(); ++c)
    if (action[c] > 0.0) last_positive = c;
  if (last_positive == action.size())
    throw std::invalid_argument("sample_batch: action has no positive weight");

  std::vector<std::pair<int, std::size_t>> batch;
  batch.reserve(static_cast<std::size_t>(batch_size));
  for (int b = 0; b < batch_size; ++b) {
    const double u = rng.uniform() * sum;
    double cum = 0.0;
    std::size_t cls = last_positive;  // fp-rounding fallback stays on positive mass
    for (std::size_t c = 0; c < action.size(); ++c) {
      if (action[c] <= 0.0) continue;
      cum += action[c];
      if (u < cum) {
        cls = c;
        break;
      }
    }
    const auto idx = static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(train[cls].size()) - 1));
    batch.emplace_back(static_cast<int>(cls), idx);
  }
  return batch;
}

// ---------------------------------------------------------------------------
// Metrics

struct MetricsRecord {
  int step = 0;                    // student optimizer steps completed
  std::string phase;               // schedule token, or "frar"
  std::vector<double> action;      // mixture in effect for this interval
  std::vector<double> class_loss;  // mean train loss per class over the interval
  std::vector<double> class_accuracy;  // validation accuracy per class
  double overall_accuracy = 0.0;
  double reward = 0.0;
};

struct RunResult {
  std::vector<MetricsRecord> records;
  EvalResult final_validation;
  EvalResult final_test;
  int transitions_stored = 0;  // teacher replay insertions (0 for schedules)
  double wall_seconds = 0.0;   // reported in the manifest, never in the CSV
};

// Hands the trained networks to the caller (e.g. for checkpointing) before a
// run returns; the pointers are only valid inside the callback. `teacher` is
// null for fixed-schedule and uniform runs.
struct RunArtifacts {
  const LenModel* student = nullptr;
  const DdpgAgent* teacher = nullptr;
};
using ArtifactSink = std::function<void(const RunArtifacts&)>;

// Comma-separated metrics with a header; wall-clock is deliberately omitted
// so that identical runs produce identical bytes.
inline void write_metrics_csv(const std::string& path,
                              const std::vector<MetricsRecord>& records, int num_classes) {
  std::ofstream os(path);
  if (!os) throw IoError("metrics: cannot open " + path + " for writing");
  os << "step,phase,reward,overall_accuracy";
  for (int c = 1; c <= num_classes; ++c) os << ",action_" << c;
  for (int c = 1; c <= num_classes; ++c) os << ",loss_" << c;
  for (int c = 1; c <= num_classes; ++c) os << ",val_acc_" << c;
  os << "\n";
  os << std::setprecision(17);
  int prev_step = -1;
  for (const auto& r : records) {
    if (r.step <= prev_step) throw std::logic_error("metrics: steps must be monotone");
    prev_step = r.step;
    os << r.step << "," << r.phase << "," << r.reward << "," << r.overall_accuracy;
    for (double v : r.action) os << "," << v;
    for (double v : r.class_loss) os << "," << v;
    for (double v : r.class_accuracy) os << "," << v;
    os << "\n";
  }
  if (!os.flush()) throw IoError("metrics: write failed for " + path);
}

// ---------------------------------------------------------------------------
// Training loops

namespace detail {

struct IntervalStats {
  std::vector<double> class_loss;
  std::vector<double> class_correct_prob;
  std::vector<double> batch_counts;
};

// Runs `steps` student optimizer steps with a fixed mixture, tallying
// per-class loss, mean correct-answer probability, and draw counts.
inline IntervalStats train_interval(LenModel& student, Adam& opt, const ClassPools& pools,
                                    const Action& action, int steps, int batch_size, Rng& rng,
                                    Taxonomy taxonomy) {
  const std::size_t C = pools.train.size();
  IntervalStats st;
  st.class_loss.assign(C, 0.0);
  st.class_correct_prob.assign(C, 0.0);
  st.batch_counts.assign(C, 0.0);
  const bool with_types = student.config().type_loss_weight > 0.0;

  for (int s = 0; s < steps; ++s) {
    const auto batch = sample_batch(action, pools.train, batch_size, rng);
    student.params().zero_grad();
    Tensor total;
    for (const auto& [cls, idx] : batch) {
      const Puzzle& pz = pools.train[static_cast<std::size_t>(cls)][idx];
      const auto out = student.forward(pz);
      std::vector<double> labels;
      if (with_types) labels = type_target(pz, taxonomy, student.config().type_vocab);
      const Tensor loss = student.loss(out, pz.answer, labels);
      total = total.defined() ? add(total, loss) : loss;
      st.class_loss[static_cast<std::size_t>(cls)] += loss.item();
      st.class_correct_prob[static_cast<std::size_t>(cls)] +=
          out.probs.value()[static_cast<std::size_t>(pz.answer)];
      st.batch_counts[static_cast<std::size_t>(cls)] += 1.0;
    }
    total = scale(total, 1.0 / static_cast<double>(batch.size()));
    backward(total);
    opt.step(student.params());
  }

  for (std::size_t c = 0; c < C; ++c) {
    if (st.batch_counts[c] > 0.0) {
      st.class_loss[c] /= st.batch_counts[c];
      st.class_correct_prob[c] /= st.batch_counts[c];
    }
  }
  return st;
}

}  // namespace detail

// The FRAR loop: state -> action -> student trains for one interval ->
// validation reward -> transition stored -> teacher update.
inline RunResult run_frar(const HarnessConfig& cfg, const ArtifactSink& sink = {}) {
  validate_config(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  const ClassPools pools = build_pools(cfg);
  const int C = static_cast<int>(cfg.generator.categories.size());
  const int T = cfg.total_steps / cfg.teacher_interval;
  const int N = cfg.teacher.history_window;

  LenModel student(cfg.student, derive_seed(cfg.seed, 0x73747564));  // student stream
  Adam opt(AdamConfig{cfg.student_lr, 0.9, 0.999, 1e-8});
  DdpgAgent teacher(static_cast<int>(teacher_state_dim(C, N)), C, cfg.teacher,
                    derive_seed(cfg.seed, 0x74656163));  // teacher stream
  ReplayBuffer buffer(cfg.teacher.replay_capacity);
  Rng sample_rng(derive_seed(cfg.seed, 0x73616d70));
  Rng replay_rng(derive_seed(cfg.seed, 0x7265706c));

  RunResult res;
  std::vector<StepRecord> history;
  for (int t = 0; t < T; ++t) {
    const auto state = build_state(history, t, T, C, N);
    const Action action = teacher.select_action(state, /*explore=*/true);

    const auto st = detail::train_interval(student, opt, pools, action, cfg.teacher_interval,
                                           cfg.batch_size, sample_rng,
                                           cfg.generator.taxonomy);
    const EvalResult ev = evaluate(student, pools.val);
    const double r_step = reward(ev.correct);
    const bool terminal = (t + 1 == T);
    const double r = cfg.terminal_reward_only && !terminal ? 0.0 : r_step;

    StepRecord rec;
    rec.class_loss = st.class_loss;
    rec.class_accuracy = ev.per_class;
    rec.class_correct_prob = st.class_correct_prob;
    rec.batch_counts = st.batch_counts;
    rec.action = action;
    history.push_back(rec);

    const auto next_state = build_state(history, t + 1, T, C, N);
    buffer.store(Transition{state, action, r, next_state, terminal});
    ++res.transitions_stored;
    teacher.update(buffer.sample(static_cast<std::size_t>(cfg.teacher.update_batch),
                                 replay_rng));

    MetricsRecord m;
    m.step = (t + 1) * cfg.teacher_interval;
    m.phase = "frar";
    m.action = action;
    m.class_loss = st.class_loss;
    m.class_accuracy = ev.per_class;
    m.overall_accuracy = ev.overall;
    m.reward = r;
    res.records.push_back(std::move(m));
  }

  res.final_validation = evaluate(student, pools.val);
  res.final_test = evaluate(student, pools.test);
  if (sink) sink(RunArtifacts{&student, &teacher});
  res.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

// Fixed-trajectory training; evaluation happens on the same cadence as the
// teacher loop (every teacher_interval steps, and at each phase boundary).
inline RunResult run_schedule(const HarnessConfig& cfg, const Schedule& schedule,
                              const ArtifactSink& sink = {}) {
  validate_config(cfg);
  if (schedule.phases.empty()) throw std::invalid_argument("schedule: no phases");
  for (const auto& p : schedule.phases) {
    if (p.weights.size() != cfg.generator.categories.size())
      throw std::invalid_argument("schedule: phase width does not match class count");
    if (p.steps <= 0) throw std::invalid_argument("schedule: phase steps must be positive");
  }

  const auto t0 = std::chrono::steady_clock::now();
  const ClassPools pools = build_pools(cfg);
  LenModel student(cfg.student, derive_seed(cfg.seed, 0x73747564));
  Adam opt(AdamConfig{cfg.student_lr, 0.9, 0.999, 1e-8});
  Rng sample_rng(derive_seed(cfg.seed, 0x73616d70));

  RunResult res;
  int done = 0;
  for (const auto& phase : schedule.phases) {
    int left = phase.steps;
    while (left > 0) {
      const int chunk = std::min(left, cfg.teacher_interval);
      const auto st = detail::train_interval(student, opt, pools, phase.weights, chunk,
                                             cfg.batch_size, sample_rng,
                                             cfg.generator.taxonomy);
      const EvalResult ev = evaluate(student, pools.val);
      done += chunk;
      left -= chunk;

      MetricsRecord m;
      m.step = done;
      m.phase = phase.label;
      m.action = phase.weights;
      m.class_loss = st.class_loss;
      m.class_accuracy = ev.per_class;
      m.overall_accuracy = ev.overall;
      m.reward = ev.overall;
      res.records.push_back(std::move(m));
    }
  }

  res.final_validation = evaluate(student, pools.val);
  res.final_test = evaluate(student, pools.test);
  if (sink) sink(RunArtifacts{&student, nullptr});
  res.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

// ---------------------------------------------------------------------------
// Distraction sweeps

struct SweepCell {
  double mean = 0.0;
  double divergence = 0.0;
  std::uint64_t seed = 0;
  double accuracy = 0.0;  // final test accuracy
};

// One uniform-sampling student per (mean, divergence, seed) cell.
inline std::vector<SweepCell> run_sweep(const HarnessConfig& base,
                                        const std::vector<double>& means,
                                        const std::vector<double>& divergences,
                                        const std::vector<std::uint64_t>& seeds) {
  if (means.empty() || divergences.empty() || seeds.empty())
    throw std::invalid_argument("sweep: means, divergences, and seeds must be nonempty");
  std::vector<SweepCell> table;
  for (const double mean : means) {
    for (const double div : divergences) {
      for (const std::uint64_t seed : seeds) {
        HarnessConfig cfg = base;
        cfg.generator.distraction_mean = mean;
        cfg.generator.distraction_divergence = div;
        cfg.seed = seed;
        const Schedule uniform = uniform_schedule(
            static_cast<int>(cfg.generator.categories.size()), cfg.total_steps);
        const RunResult run = run_schedule(cfg, uniform);
        table.push_back(SweepCell{mean, div, seed, run.final_test.overall});
      }
    }
  }
  return table;
}

inline void write_sweep_csv(const std::string& path, const std::vector<SweepCell>& table) {
  std::ofstream os(path);
  if (!os) throw IoError("sweep: cannot open " + path + " for writing");
  os << "mean,divergence,seed,accuracy\n";
  os << std::setprecision(17);
  for (const auto& cell : table)
    os << cell.mean << "," << cell.divergence << "," << cell.seed << "," << cell.accuracy
       << "\n";
  if (!os.flush()) throw IoError("sweep: write failed for " + path);
}

// ---------------------------------------------------------------------------
// Reference two-class setups mirroring the trajectory study: class 1 reasons
// with a conjunction on shape type, class 2 on shape size. With
// `with_distractors`, each class randomizes the other's reasoning attribute
// in every panel (one distracting feature, no divergence).

inline GeneratorConfig trajectory_pair_config(bool with_distractors) {
  GeneratorConfig cfg;
  cfg.taxonomy = Taxonomy::PgmStyle;
  CategoryDef type_class;
  type_class.rules = {RuleSpec{Rule::And, Stream::Shape, Attribute::Type}};
  CategoryDef size_class;
  size_class.rules = {RuleSpec{Rule::And, Stream::Shape, Attribute::Size}};
  if (with_distractors) {
    type_class.distractor_pool = {AttrRef{Stream::Shape, Attribute::Size}};
    type_class.distraction_mean = 1.0;
    type_class.distraction_divergence = 0.0;
    size_class.distractor_pool = {AttrRef{Stream::Shape, Attribute::Type}};
    size_class.distraction_mean = 1.0;
    size_class.distraction_divergence = 0.0;
  }
  cfg.categories = {type_class, size_class};
  return cfg;
}

}  // namespace frar

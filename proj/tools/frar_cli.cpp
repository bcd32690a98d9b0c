// Command-line front end: dataset generation, student training (FRAR teacher,
// uniform sampling, or a fixed trajectory), evaluation, distraction sweeps,
// and relation-embedding export.
//
// One JSON document configures every command; individual flags override the
// corresponding config keys. Each run writes a manifest.json holding the
// fully resolved configuration, the output file list, and wall-clock time, so
// a run can be reproduced from its manifest alone. Exit code 0 means every
// requested output was fully written; any failure leaves a single-line
// diagnostic on stderr and, when possible, a manifest with complete=false.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <initializer_list>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "frar/dataset.hpp"
#include "frar/harness.hpp"

namespace {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Resolved configuration: every key has a default, so an empty config file
// (or none at all) is a valid run description.

struct CliConfig {
  std::uint64_t seed = 0;
  std::string out = "frar-out";
  int verbosity = 1;  // 0 errors only, 1 summaries, 2 per-interval progress
  int jobs = 1;       // sweep worker threads
  std::string mode = "uniform";  // frar | uniform | schedule
  std::string schedule = "1";    // trajectory used when mode == "schedule"
  int generate_per_class = 100;
  std::vector<double> sweep_means = {0.0, 1.0};  // fits the default 1-attribute pools
  std::vector<double> sweep_divergences = {0.0};
  std::vector<std::uint64_t> sweep_seeds = {1, 2, 3};
  frar::HarnessConfig harness;

  // Default dataset: the two-class conjunction pair (type vs size), each with
  // the other's attribute as its distractor pool. The distraction amount is
  // left to the generator-wide knobs so that --distraction-mean and sweep
  // grids take effect; per-category overrides in a config file still win.
  CliConfig() {
    harness.generator = frar::trajectory_pair_config(true);
    for (auto& cat : harness.generator.categories) {
      cat.distraction_mean.reset();
      cat.distraction_divergence.reset();
    }
    harness.generator.distraction_mean = 1.0;
    harness.generator.distraction_divergence = 0.0;
  }
};

constexpr std::uint64_t kGenerateTag = 0x67656e;  // dataset-command seed stream

// ---------------------------------------------------------------------------
// JSON -> config, rejecting unknown keys at every level

void check_keys(const json& j, const std::string& where,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw frar::FormatError("config: " + where + " must be a JSON object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || item.key() == a;
    if (!known)
      throw frar::FormatError("config: unknown key '" + item.key() + "' in " + where);
  }
}

template <typename T>
void read_to(const json& j, const char* key, const std::string& where, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw frar::FormatError("config: bad value for " + where + "." + key + ": " + e.what());
  }
}

template <typename Fn, typename E>
void read_enum(const json& j, const char* key, const std::string& where, Fn&& parse, E& out) {
  if (!j.contains(key)) return;
  try {
    out = parse(j.at(key).get<std::string>());
  } catch (const json::exception& e) {
    throw frar::FormatError("config: bad value for " + where + "." + key + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw frar::FormatError("config: " + where + "." + key + ": " + e.what());
  }
}

frar::AttrRef attr_from_json(const json& j, const std::string& where) {
  check_keys(j, where, {"stream", "attribute"});
  frar::AttrRef a;
  read_enum(j, "stream", where, frar::stream_from_string, a.stream);
  read_enum(j, "attribute", where, frar::attribute_from_string, a.attribute);
  return a;
}

frar::RuleSpec rule_from_json(const json& j, const std::string& where) {
  check_keys(j, where, {"rule", "stream", "attribute", "direction"});
  frar::RuleSpec r;
  read_enum(j, "rule", where, frar::rule_from_string, r.rule);
  read_enum(j, "stream", where, frar::stream_from_string, r.stream);
  read_enum(j, "attribute", where, frar::attribute_from_string, r.attribute);
  read_enum(j, "direction", where, frar::direction_from_string, r.direction);
  return r;
}

frar::CategoryDef category_from_json(const json& j, const std::string& where) {
  check_keys(j, where,
             {"rules", "distraction_mean", "distraction_divergence", "distractor_pool"});
  frar::CategoryDef c;
  if (j.contains("rules")) {
    if (!j.at("rules").is_array())
      throw frar::FormatError("config: " + where + ".rules must be an array");
    std::size_t i = 0;
    for (const auto& r : j.at("rules"))
      c.rules.push_back(rule_from_json(r, where + ".rules[" + std::to_string(i++) + "]"));
  }
  if (j.contains("distraction_mean")) {
    double v = 0.0;
    read_to(j, "distraction_mean", where, v);
    c.distraction_mean = v;
  }
  if (j.contains("distraction_divergence")) {
    double v = 0.0;
    read_to(j, "distraction_divergence", where, v);
    c.distraction_divergence = v;
  }
  if (j.contains("distractor_pool")) {
    if (!j.at("distractor_pool").is_array())
      throw frar::FormatError("config: " + where + ".distractor_pool must be an array");
    std::size_t i = 0;
    for (const auto& a : j.at("distractor_pool"))
      c.distractor_pool.push_back(
          attr_from_json(a, where + ".distractor_pool[" + std::to_string(i++) + "]"));
  }
  return c;
}

void generator_from_json(const json& j, frar::GeneratorConfig& g) {
  check_keys(j, "generator",
             {"taxonomy", "categories", "distraction_mean", "distraction_divergence"});
  read_enum(j, "taxonomy", "generator", frar::taxonomy_from_string, g.taxonomy);
  read_to(j, "distraction_mean", "generator", g.distraction_mean);
  read_to(j, "distraction_divergence", "generator", g.distraction_divergence);
  if (j.contains("categories")) {
    if (!j.at("categories").is_array())
      throw frar::FormatError("config: generator.categories must be an array");
    g.categories.clear();
    std::size_t i = 0;
    for (const auto& c : j.at("categories"))
      g.categories.push_back(
          category_from_json(c, "generator.categories[" + std::to_string(i++) + "]"));
  }
}

void student_from_json(const json& j, frar::LenConfig& s) {
  check_keys(j, "student",
             {"embed_dim", "encoder_hidden", "g_hidden", "f_hidden", "two_stream",
              "type_loss_weight", "type_vocab"});
  read_to(j, "embed_dim", "student", s.embed_dim);
  read_to(j, "encoder_hidden", "student", s.encoder_hidden);
  read_to(j, "g_hidden", "student", s.g_hidden);
  read_to(j, "f_hidden", "student", s.f_hidden);
  read_to(j, "two_stream", "student", s.two_stream);
  read_to(j, "type_loss_weight", "student", s.type_loss_weight);
  read_to(j, "type_vocab", "student", s.type_vocab);
}

void teacher_from_json(const json& j, frar::DdpgConfig& t) {
  check_keys(j, "teacher",
             {"actor_hidden", "critic_hidden", "gamma", "tau", "replay_capacity",
              "update_batch", "noise_sigma", "noise_decay", "noise_floor", "history_window",
              "actor_lr", "critic_lr"});
  read_to(j, "actor_hidden", "teacher", t.actor_hidden);
  read_to(j, "critic_hidden", "teacher", t.critic_hidden);
  read_to(j, "gamma", "teacher", t.gamma);
  read_to(j, "tau", "teacher", t.tau);
  read_to(j, "replay_capacity", "teacher", t.replay_capacity);
  read_to(j, "update_batch", "teacher", t.update_batch);
  read_to(j, "noise_sigma", "teacher", t.noise_sigma);
  read_to(j, "noise_decay", "teacher", t.noise_decay);
  read_to(j, "noise_floor", "teacher", t.noise_floor);
  read_to(j, "history_window", "teacher", t.history_window);
  read_to(j, "actor_lr", "teacher", t.actor_lr);
  read_to(j, "critic_lr", "teacher", t.critic_lr);
}

void train_from_json(const json& j, CliConfig& c) {
  check_keys(j, "train",
             {"batch_size", "teacher_interval", "total_steps", "train_per_class",
              "val_per_class", "test_per_class", "student_lr", "terminal_reward_only",
              "mode", "schedule"});
  read_to(j, "batch_size", "train", c.harness.batch_size);
  read_to(j, "teacher_interval", "train", c.harness.teacher_interval);
  read_to(j, "total_steps", "train", c.harness.total_steps);
  read_to(j, "train_per_class", "train", c.harness.train_per_class);
  read_to(j, "val_per_class", "train", c.harness.val_per_class);
  read_to(j, "test_per_class", "train", c.harness.test_per_class);
  read_to(j, "student_lr", "train", c.harness.student_lr);
  read_to(j, "terminal_reward_only", "train", c.harness.terminal_reward_only);
  read_to(j, "mode", "train", c.mode);
  read_to(j, "schedule", "train", c.schedule);
}

void sweep_from_json(const json& j, CliConfig& c) {
  check_keys(j, "sweep", {"means", "divergences", "seeds"});
  read_to(j, "means", "sweep", c.sweep_means);
  read_to(j, "divergences", "sweep", c.sweep_divergences);
  read_to(j, "seeds", "sweep", c.sweep_seeds);
}

void apply_config_file(const std::string& path, CliConfig& c) {
  std::ifstream is(path);
  if (!is) throw frar::IoError("config: cannot open " + path);
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw frar::FormatError("config: " + path + ": " + e.what());
  }
  check_keys(j, "top level",
             {"seed", "out", "verbosity", "jobs", "generator", "student", "teacher", "train",
              "generate", "sweep"});
  read_to(j, "seed", "top level", c.seed);
  read_to(j, "out", "top level", c.out);
  read_to(j, "verbosity", "top level", c.verbosity);
  read_to(j, "jobs", "top level", c.jobs);
  if (j.contains("generator")) generator_from_json(j.at("generator"), c.harness.generator);
  if (j.contains("student")) student_from_json(j.at("student"), c.harness.student);
  if (j.contains("teacher")) teacher_from_json(j.at("teacher"), c.harness.teacher);
  if (j.contains("train")) train_from_json(j.at("train"), c);
  if (j.contains("generate")) {
    check_keys(j.at("generate"), "generate", {"per_class"});
    read_to(j.at("generate"), "per_class", "generate", c.generate_per_class);
  }
  if (j.contains("sweep")) sweep_from_json(j.at("sweep"), c);
}

// ---------------------------------------------------------------------------
// Config -> JSON (the manifest's resolved-config block)

json attr_to_json(const frar::AttrRef& a) {
  return {{"stream", frar::to_string(a.stream)}, {"attribute", frar::to_string(a.attribute)}};
}

json rule_to_json(const frar::RuleSpec& r) {
  return {{"rule", frar::to_string(r.rule)},
          {"stream", frar::to_string(r.stream)},
          {"attribute", frar::to_string(r.attribute)},
          {"direction", frar::to_string(r.direction)}};
}

json category_to_json(const frar::CategoryDef& c) {
  json j;
  j["rules"] = json::array();
  for (const auto& r : c.rules) j["rules"].push_back(rule_to_json(r));
  if (c.distraction_mean) j["distraction_mean"] = *c.distraction_mean;
  if (c.distraction_divergence) j["distraction_divergence"] = *c.distraction_divergence;
  if (!c.distractor_pool.empty()) {
    j["distractor_pool"] = json::array();
    for (const auto& a : c.distractor_pool) j["distractor_pool"].push_back(attr_to_json(a));
  }
  return j;
}

json generator_to_json(const frar::GeneratorConfig& g) {
  json cats = json::array();
  for (const auto& c : g.categories) cats.push_back(category_to_json(c));
  return {{"taxonomy", frar::to_string(g.taxonomy)},
          {"categories", std::move(cats)},
          {"distraction_mean", g.distraction_mean},
          {"distraction_divergence", g.distraction_divergence}};
}

json student_to_json(const frar::LenConfig& s) {
  return {{"embed_dim", s.embed_dim},     {"encoder_hidden", s.encoder_hidden},
          {"g_hidden", s.g_hidden},       {"f_hidden", s.f_hidden},
          {"two_stream", s.two_stream},   {"type_loss_weight", s.type_loss_weight},
          {"type_vocab", s.type_vocab}};
}

json teacher_to_json(const frar::DdpgConfig& t) {
  return {{"actor_hidden", t.actor_hidden},
          {"critic_hidden", t.critic_hidden},
          {"gamma", t.gamma},
          {"tau", t.tau},
          {"replay_capacity", t.replay_capacity},
          {"update_batch", t.update_batch},
          {"noise_sigma", t.noise_sigma},
          {"noise_decay", t.noise_decay},
          {"noise_floor", t.noise_floor},
          {"history_window", t.history_window},
          {"actor_lr", t.actor_lr},
          {"critic_lr", t.critic_lr}};
}

json config_to_json(const CliConfig& c) {
  return {{"seed", c.seed},
          {"out", c.out},
          {"verbosity", c.verbosity},
          {"jobs", c.jobs},
          {"generator", generator_to_json(c.harness.generator)},
          {"student", student_to_json(c.harness.student)},
          {"teacher", teacher_to_json(c.harness.teacher)},
          {"train",
           {{"batch_size", c.harness.batch_size},
            {"teacher_interval", c.harness.teacher_interval},
            {"total_steps", c.harness.total_steps},
            {"train_per_class", c.harness.train_per_class},
            {"val_per_class", c.harness.val_per_class},
            {"test_per_class", c.harness.test_per_class},
            {"student_lr", c.harness.student_lr},
            {"terminal_reward_only", c.harness.terminal_reward_only},
            {"mode", c.mode},
            {"schedule", c.schedule}}},
          {"generate", {{"per_class", c.generate_per_class}}},
          {"sweep",
           {{"means", c.sweep_means},
            {"divergences", c.sweep_divergences},
            {"seeds", c.sweep_seeds}}}};
}

// ---------------------------------------------------------------------------
// Manifest + command runner

void write_manifest(const std::string& dir, const std::string& command, const CliConfig& cfg,
                    const std::vector<std::string>& outputs, const json& extra, bool complete,
                    const std::string& error, double wall_seconds) {
  json m = {{"command", command},
            {"complete", complete},
            {"config", config_to_json(cfg)},
            {"outputs", outputs},
            {"wall_seconds", wall_seconds}};
  if (!error.empty()) m["error"] = error;
  for (const auto& item : extra.items()) m[item.key()] = item.value();
  const std::string path = dir + "/manifest.json";
  std::ofstream os(path);
  if (!os) throw frar::IoError("manifest: cannot open " + path + " for writing");
  os << m.dump(2) << "\n";
  if (!os.flush()) throw frar::IoError("manifest: write failed for " + path);
}

// Runs a command body, then writes the manifest. The body appends each output
// file (relative to the out directory) as soon as it lands, so a failure
// still records the partial outputs with complete=false.
int run_command(const std::string& name, const CliConfig& cfg,
                const std::function<void(std::vector<std::string>&, json&)>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::string> outputs;
  json extra = json::object();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
  try {
    std::filesystem::create_directories(cfg.out);
    body(outputs, extra);
    write_manifest(cfg.out, name, cfg, outputs, extra, /*complete=*/true, "", elapsed());
    if (cfg.verbosity >= 1) std::cout << "wrote " << cfg.out << "/manifest.json\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "frar " << name << ": " << e.what() << "\n";
    try {
      write_manifest(cfg.out, name, cfg, outputs, extra, /*complete=*/false, e.what(),
                     elapsed());
    } catch (...) {
      // The diagnostic above already reports the original failure.
    }
    return 1;
  }
}

std::string category_label(const frar::CategoryDef& c) {
  std::string s;
  for (const auto& r : c.rules) {
    if (!s.empty()) s += "+";
    s += std::string(frar::to_string(r.rule)) + ":" + frar::to_string(r.stream) + ":" +
         frar::to_string(r.attribute);
  }
  return s;
}

// Auto-size the auxiliary type-head vocabulary to the taxonomy when the head
// is enabled but no size was given.
void resolve_type_vocab(CliConfig& cfg) {
  if (cfg.harness.student.type_loss_weight > 0.0 && cfg.harness.student.type_vocab == 0)
    cfg.harness.student.type_vocab = static_cast<int>(
        frar::enumerate_combinations(cfg.harness.generator.taxonomy).size());
}

// ---------------------------------------------------------------------------
// Commands

void cmd_generate(const CliConfig& cfg, std::vector<std::string>& outputs, json& extra) {
  frar::validate_config(cfg.harness.generator);
  if (cfg.generate_per_class <= 0)
    throw std::invalid_argument("generate: per_class must be positive");

  const auto& gen = cfg.harness.generator;
  std::vector<frar::Puzzle> all;
  all.reserve(gen.categories.size() * static_cast<std::size_t>(cfg.generate_per_class));
  json classes = json::array();
  double total_distracting = 0.0;
  for (std::size_t c = 0; c < gen.categories.size(); ++c) {
    double distracting = 0.0;
    for (int i = 0; i < cfg.generate_per_class; ++i) {
      frar::Rng rng(frar::derive_seed(cfg.seed, kGenerateTag, c, static_cast<std::uint64_t>(i)));
      all.push_back(frar::generate_puzzle(gen, static_cast<int>(c), rng));
      distracting += static_cast<double>(all.back().distracting.size());
    }
    const double mean = distracting / cfg.generate_per_class;
    total_distracting += distracting;
    classes.push_back({{"label", category_label(gen.categories[c])},
                       {"count", cfg.generate_per_class},
                       {"mean_distracting", mean}});
    if (cfg.verbosity >= 1)
      std::cout << "class " << (c + 1) << " (" << category_label(gen.categories[c]) << "): "
                << cfg.generate_per_class << " puzzles, mean distracting " << mean << "\n";
  }
  const std::string file = "dataset.jsonl";
  frar::write_dataset(all, cfg.out + "/" + file);
  outputs.push_back(file);

  const double overall = total_distracting / static_cast<double>(all.size());
  extra["summary"] = {{"classes", std::move(classes)},
                      {"total", all.size()},
                      {"mean_distracting", overall}};
  if (cfg.verbosity >= 1)
    std::cout << "total " << all.size() << " puzzles, mean distracting " << overall
              << "\nwrote " << cfg.out << "/" << file << "\n";
}

void cmd_train(const CliConfig& cfg, std::vector<std::string>& outputs, json& extra) {
  if (cfg.mode != "frar" && cfg.mode != "uniform" && cfg.mode != "schedule")
    throw std::invalid_argument("train: mode must be frar, uniform, or schedule, got '" +
                                cfg.mode + "'");
  const int num_classes = static_cast<int>(cfg.harness.generator.categories.size());

  const json student_meta = {{"kind", "len-student"},
                             {"seed", cfg.seed},
                             {"student", student_to_json(cfg.harness.student)}};
  const json teacher_meta = {{"kind", "ddpg-teacher"},
                             {"seed", cfg.seed},
                             {"teacher", teacher_to_json(cfg.harness.teacher)}};
  auto sink = [&](const frar::RunArtifacts& art) {
    frar::save_checkpoint(cfg.out + "/student.ckpt", student_meta.dump(),
                          {&art.student->params()});
    outputs.push_back("student.ckpt");
    if (art.teacher) {
      art.teacher->save(cfg.out + "/teacher.ckpt", teacher_meta.dump());
      outputs.push_back("teacher.ckpt");
    }
  };

  frar::RunResult run;
  if (cfg.mode == "frar") {
    run = frar::run_frar(cfg.harness, sink);
  } else {
    const frar::Schedule sched =
        cfg.mode == "uniform"
            ? frar::uniform_schedule(num_classes, cfg.harness.total_steps)
            : frar::Schedule::parse(cfg.schedule, num_classes, cfg.harness.total_steps);
    run = frar::run_schedule(cfg.harness, sched, sink);
  }

  frar::write_metrics_csv(cfg.out + "/metrics.csv", run.records, num_classes);
  outputs.push_back("metrics.csv");

  json transitions = json::array();
  for (std::size_t i = 1; i < run.records.size(); ++i) {
    if (run.records[i].phase != run.records[i - 1].phase) {
      transitions.push_back({{"step", run.records[i - 1].step},
                             {"from", run.records[i - 1].phase},
                             {"to", run.records[i].phase}});
      if (cfg.verbosity >= 1)
        std::cout << "phase transition at step " << run.records[i - 1].step << ": "
                  << run.records[i - 1].phase << " -> " << run.records[i].phase << "\n";
    }
  }
  if (cfg.verbosity >= 2)
    for (const auto& r : run.records)
      std::cout << "step " << r.step << " [" << r.phase << "] val "
                << r.overall_accuracy << " reward " << r.reward << "\n";

  extra["mode"] = cfg.mode;
  extra["phase_transitions"] = std::move(transitions);
  extra["records"] = run.records.size();
  extra["transitions_stored"] = run.transitions_stored;
  extra["final_validation_accuracy"] = run.final_validation.overall;
  extra["final_test_accuracy"] = run.final_test.overall;
  if (cfg.verbosity >= 1)
    std::cout << "final validation accuracy " << run.final_validation.overall
              << ", test accuracy " << run.final_test.overall << "\nwrote " << cfg.out
              << "/metrics.csv, student.ckpt"
              << (cfg.mode == "frar" ? ", teacher.ckpt" : "") << "\n";
}

frar::LenModel model_from_checkpoint(const std::string& path) {
  const frar::CheckpointData ck = frar::load_checkpoint(path);
  json meta;
  try {
    meta = json::parse(ck.meta);
  } catch (const json::exception& e) {
    throw frar::FormatError("checkpoint: " + path + " has unreadable metadata: " + e.what());
  }
  if (!meta.is_object() || meta.value("kind", "") != "len-student")
    throw frar::FormatError("checkpoint: " + path + " is not a student checkpoint");
  frar::LenConfig lc;
  student_from_json(meta.at("student"), lc);
  frar::LenModel model(lc, 0);  // fresh weights, immediately overwritten
  frar::restore_parameters(model.params(), ck);
  return model;
}

std::vector<std::vector<frar::Puzzle>> pools_by_category(std::vector<frar::Puzzle> puzzles,
                                                         const std::string& path) {
  if (puzzles.empty()) throw frar::EmptyPool("dataset " + path + " has no puzzles");
  int max_cat = 0;
  for (const auto& p : puzzles) max_cat = std::max(max_cat, p.category);
  std::vector<std::vector<frar::Puzzle>> pools(static_cast<std::size_t>(max_cat) + 1);
  for (auto& p : puzzles) {
    auto& pool = pools[static_cast<std::size_t>(p.category)];
    pool.push_back(std::move(p));
  }
  return pools;
}

void cmd_eval(const CliConfig& cfg, const std::string& checkpoint, const std::string& data,
              std::vector<std::string>& outputs, json& extra) {
  const frar::LenModel model = model_from_checkpoint(checkpoint);
  const auto pools = pools_by_category(frar::read_dataset(data), data);
  const frar::EvalResult ev = frar::evaluate(model, pools);

  std::size_t total = 0;
  for (auto n : ev.counts) total += n;
  json report = {{"overall_accuracy", ev.overall},
                 {"per_class_accuracy", ev.per_class},
                 {"per_class_count", ev.counts},
                 {"total", total},
                 {"checkpoint", checkpoint},
                 {"dataset", data}};
  const std::string file = "eval.json";
  {
    std::ofstream os(cfg.out + "/" + file);
    if (!os) throw frar::IoError("eval: cannot open " + cfg.out + "/" + file + " for writing");
    os << report.dump(2) << "\n";
    if (!os.flush()) throw frar::IoError("eval: write failed for " + cfg.out + "/" + file);
  }
  outputs.push_back(file);
  extra["report"] = std::move(report);

  if (cfg.verbosity >= 1) {
    std::cout << "overall accuracy " << ev.overall << " on " << total << " puzzles\n";
    for (std::size_t c = 0; c < ev.per_class.size(); ++c)
      if (ev.counts[c] > 0)
        std::cout << "class " << (c + 1) << ": " << ev.per_class[c] << " (" << ev.counts[c]
                  << " puzzles)\n";
    std::cout << "wrote " << cfg.out << "/" << file << "\n";
  }
}

void cmd_sweep(const CliConfig& cfg, std::vector<std::string>& outputs, json& extra) {
  if (cfg.sweep_means.empty() || cfg.sweep_divergences.empty() || cfg.sweep_seeds.empty())
    throw std::invalid_argument("sweep: means, divergences, and seeds must be nonempty");
  if (cfg.jobs < 1) throw std::invalid_argument("sweep: jobs must be at least 1");

  std::vector<frar::SweepCell> cells;
  for (double mean : cfg.sweep_means)
    for (double div : cfg.sweep_divergences)
      for (std::uint64_t seed : cfg.sweep_seeds)
        cells.push_back(frar::SweepCell{mean, div, seed, 0.0});

  // Cells are independent single-student runs; workers pull from a shared
  // index and write results by position, so the output order (and bytes)
  // never depends on the worker count.
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      try {
        frar::HarnessConfig hc = cfg.harness;
        hc.generator.distraction_mean = cells[i].mean;
        hc.generator.distraction_divergence = cells[i].divergence;
        hc.seed = cells[i].seed;
        const frar::Schedule uniform = frar::uniform_schedule(
            static_cast<int>(hc.generator.categories.size()), hc.total_steps);
        cells[i].accuracy = frar::run_schedule(hc, uniform).final_test.overall;
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next.store(cells.size());  // stop handing out further cells
        return;
      }
    }
  };
  const std::size_t n_threads = std::min<std::size_t>(
      static_cast<std::size_t>(cfg.jobs), cells.size());
  std::vector<std::thread> threads;
  for (std::size_t t = 0; t + 1 < n_threads; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);

  const std::string file = "sweep.csv";
  frar::write_sweep_csv(cfg.out + "/" + file, cells);
  outputs.push_back(file);
  extra["rows"] = cells.size();

  if (cfg.verbosity >= 1) {
    for (const auto& cell : cells)
      std::cout << "mean " << cell.mean << " divergence " << cell.divergence << " seed "
                << cell.seed << ": accuracy " << cell.accuracy << "\n";
    std::cout << "wrote " << cfg.out << "/" << file << " (" << cells.size() << " rows)\n";
  }
}

void cmd_export(const CliConfig& cfg, const std::string& checkpoint, const std::string& data,
                std::vector<std::string>& outputs, json& extra) {
  const frar::LenModel model = model_from_checkpoint(checkpoint);
  const auto puzzles = frar::read_dataset(data);
  if (puzzles.empty()) throw frar::EmptyPool("dataset " + data + " has no puzzles");
  const std::string file = "embeddings.csv";
  frar::export_embeddings(model, puzzles, cfg.out + "/" + file);
  outputs.push_back(file);
  extra["rows"] = puzzles.size();
  if (cfg.verbosity >= 1)
    std::cout << "wrote " << cfg.out << "/" << file << " (" << puzzles.size() << " rows)\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "FRAR curriculum toolkit: matrix-puzzle generation, LEN student training with a DDPG "
      "teacher, evaluation, distraction sweeps, and embedding export"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t f_seed = 0;
  std::string f_out, f_schedule, f_teacher, f_checkpoint, f_data;
  int f_jobs = 1, f_verbosity = 1, f_steps = 0, f_batch = 0, f_per_class = 0;
  double f_dmean = 0.0, f_ddiv = 0.0;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file; flags override its keys");
    cmd->add_option("--seed", f_seed, "master seed");
    cmd->add_option("--out", f_out, "output directory");
    cmd->add_option("--jobs", f_jobs, "worker threads for sweeps")->check(CLI::PositiveNumber);
    cmd->add_option("--verbosity", f_verbosity, "0 errors only, 1 summaries, 2 progress")
        ->check(CLI::Range(0, 2));
  };
  auto add_distraction = [&](CLI::App* cmd) {
    cmd->add_option("--distraction-mean", f_dmean, "generator-wide distraction mean")
        ->check(CLI::NonNegativeNumber);
    cmd->add_option("--distraction-divergence", f_ddiv,
                    "generator-wide distraction divergence")
        ->check(CLI::NonNegativeNumber);
  };

  CLI::App* c_gen = app.add_subcommand("generate", "write a puzzle dataset and its summary");
  add_common(c_gen);
  add_distraction(c_gen);
  c_gen->add_option("--per-class", f_per_class, "puzzles per category")
      ->check(CLI::PositiveNumber);

  CLI::App* c_train = app.add_subcommand(
      "train", "train a student; writes metrics, checkpoints, and a manifest");
  add_common(c_train);
  add_distraction(c_train);
  c_train->add_option("--steps", f_steps, "total student optimizer steps")
      ->check(CLI::PositiveNumber);
  c_train->add_option("--batch", f_batch, "puzzles per optimizer step")
      ->check(CLI::PositiveNumber);
  c_train->add_option("--teacher", f_teacher, "sampling policy: frar, uniform, or schedule")
      ->check(CLI::IsMember({"frar", "uniform", "schedule"}));
  c_train->add_option("--schedule", f_schedule,
                      "fixed trajectory like \"1->2->1+2\" (implies --teacher schedule)");

  CLI::App* c_eval =
      app.add_subcommand("eval", "evaluate a student checkpoint on a dataset file");
  add_common(c_eval);
  c_eval->add_option("--checkpoint", f_checkpoint, "student checkpoint path")->required();
  c_eval->add_option("--data", f_data, "dataset file (one JSON puzzle per line)")->required();

  CLI::App* c_sweep = app.add_subcommand(
      "sweep", "uniform-sampling accuracy over a distraction mean/divergence/seed grid");
  add_common(c_sweep);
  c_sweep->add_option("--steps", f_steps, "total student optimizer steps per cell")
      ->check(CLI::PositiveNumber);
  c_sweep->add_option("--batch", f_batch, "puzzles per optimizer step")
      ->check(CLI::PositiveNumber);

  CLI::App* c_export = app.add_subcommand(
      "export-embeddings", "write per-puzzle relation-embedding rows for a checkpoint");
  add_common(c_export);
  c_export->add_option("--checkpoint", f_checkpoint, "student checkpoint path")->required();
  c_export->add_option("--data", f_data, "dataset file (one JSON puzzle per line)")
      ->required();

  CLI11_PARSE(app, argc, argv);
  CLI::App* sub = app.get_subcommands().front();
  auto given = [&](const std::string& name) {
    const CLI::Option* opt = sub->get_option_no_throw(name);
    return opt != nullptr && opt->count() > 0;
  };

  CliConfig cfg;
  try {
    if (given("--config")) apply_config_file(config_path, cfg);
    if (given("--seed")) cfg.seed = f_seed;
    if (given("--out")) cfg.out = f_out;
    if (given("--jobs")) cfg.jobs = f_jobs;
    if (given("--verbosity")) cfg.verbosity = f_verbosity;
    if (given("--distraction-mean")) cfg.harness.generator.distraction_mean = f_dmean;
    if (given("--distraction-divergence"))
      cfg.harness.generator.distraction_divergence = f_ddiv;
    if (given("--per-class")) cfg.generate_per_class = f_per_class;
    if (given("--steps")) cfg.harness.total_steps = f_steps;
    if (given("--batch")) cfg.harness.batch_size = f_batch;
    if (given("--schedule")) {
      cfg.schedule = f_schedule;
      cfg.mode = "schedule";
    }
    if (given("--teacher")) cfg.mode = f_teacher;
    resolve_type_vocab(cfg);
  } catch (const std::exception& e) {
    std::cerr << "frar " << sub->get_name() << ": " << e.what() << "\n";
    return 1;
  }
  cfg.harness.seed = cfg.seed;

  if (sub == c_gen)
    return run_command("generate", cfg, [&](auto& outputs, auto& extra) {
      cmd_generate(cfg, outputs, extra);
    });
  if (sub == c_train)
    return run_command("train", cfg, [&](auto& outputs, auto& extra) {
      cmd_train(cfg, outputs, extra);
    });
  if (sub == c_eval)
    return run_command("eval", cfg, [&](auto& outputs, auto& extra) {
      cmd_eval(cfg, f_checkpoint, f_data, outputs, extra);
    });
  if (sub == c_sweep)
    return run_command("sweep", cfg, [&](auto& outputs, auto& extra) {
      cmd_sweep(cfg, outputs, extra);
    });
  return run_command("export-embeddings", cfg, [&](auto& outputs, auto& extra) {
    cmd_export(cfg, f_checkpoint, f_data, outputs, extra);
  });
}

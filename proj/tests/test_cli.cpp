// End-to-end tests for the command-line front end: each test spawns the real
// binary, then inspects exit codes, output files, and the run manifest.

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "frar/len.hpp"
#include "frar/nn.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct CmdResult {
  int exit_code = -1;
  std::string output;  // stdout and stderr, merged
};

std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  EXPECT_TRUE(is) << "cannot open " << p;
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

json read_json(const fs::path& p) { return json::parse(read_file(p)); }

std::vector<json> read_jsonl(const fs::path& p) {
  std::ifstream is(p);
  EXPECT_TRUE(is) << "cannot open " << p;
  std::vector<json> rows;
  std::string line;
  while (std::getline(is, line)) rows.push_back(json::parse(line));
  return rows;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    std::random_device rd;
    dir_ = fs::temp_directory_path() /
           ("frar_cli_test_" + std::to_string(static_cast<std::uint64_t>(rd()) << 16 |
                                              static_cast<std::uint64_t>(::getpid())));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  CmdResult run(const std::string& args) const {
    const fs::path log = dir_ / "cmd_output.txt";
    const std::string cmd =
        std::string(FRAR_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
    const int raw = std::system(cmd.c_str());
    CmdResult r;
    r.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    r.output = read_file(log);
    return r;
  }

  fs::path path(const std::string& rel) const { return dir_ / rel; }

  std::string write_config(const json& j, const std::string& name = "config.json") const {
    const fs::path p = dir_ / name;
    std::ofstream os(p);
    os << j.dump(2);
    return p.string();
  }

  // Small two-class setup so training-based tests stay around a second.
  json tiny_train_config() const {
    return {{"seed", 5},
            {"student", {{"embed_dim", 8}, {"g_hidden", {8}}, {"f_hidden", {8}}}},
            {"teacher",
             {{"actor_hidden", {16}},
              {"critic_hidden", {16}},
              {"update_batch", 4},
              {"history_window", 3}}},
            {"train",
             {{"batch_size", 4},
              {"teacher_interval", 5},
              {"total_steps", 20},
              {"train_per_class", 12},
              {"val_per_class", 6},
              {"test_per_class", 6}}}};
  }

  fs::path dir_;
};

// ---------------------------------------------------------------------------
// generate

TEST_F(CliTest, GenerateWritesOneLinePerRequestedPuzzle) {
  const auto r = run("generate --out " + path("g").string() + " --per-class 7 --seed 3");
  ASSERT_EQ(r.exit_code, 0) << r.output;
  const auto rows = read_jsonl(path("g/dataset.jsonl"));
  EXPECT_EQ(rows.size(), 14u);  // 7 puzzles x 2 default classes

  const json manifest = read_json(path("g/manifest.json"));
  EXPECT_TRUE(manifest.at("complete").get<bool>());
  EXPECT_EQ(manifest.at("command"), "generate");
  const auto outputs = manifest.at("outputs").get<std::vector<std::string>>();
  ASSERT_EQ(outputs.size(), 1u);
  EXPECT_EQ(outputs[0], "dataset.jsonl");
}

// The summary must agree with an independent recount over the dataset file.
TEST_F(CliTest, GenerateSummaryMatchesRecountFromFile) {
  const auto r = run("generate --out " + path("g").string() + " --per-class 25 --seed 9");
  ASSERT_EQ(r.exit_code, 0) << r.output;

  const auto rows = read_jsonl(path("g/dataset.jsonl"));
  ASSERT_EQ(rows.size(), 50u);
  std::vector<double> class_sum(2, 0.0);
  std::vector<int> class_n(2, 0);
  double total = 0.0;
  for (const auto& row : rows) {
    const int c = row.at("category").get<int>();
    ASSERT_GE(c, 0);
    ASSERT_LT(c, 2);
    const double d = static_cast<double>(row.at("distracting").size());
    class_sum[static_cast<std::size_t>(c)] += d;
    class_n[static_cast<std::size_t>(c)] += 1;
    total += d;
  }

  const json summary = read_json(path("g/manifest.json")).at("summary");
  EXPECT_EQ(summary.at("total").get<std::size_t>(), rows.size());
  EXPECT_NEAR(summary.at("mean_distracting").get<double>(),
              total / static_cast<double>(rows.size()), 1e-12);
  const auto& classes = summary.at("classes");
  ASSERT_EQ(classes.size(), 2u);
  for (std::size_t c = 0; c < 2; ++c) {
    EXPECT_EQ(classes[c].at("count").get<int>(), class_n[c]);
    EXPECT_NEAR(classes[c].at("mean_distracting").get<double>(),
                class_sum[c] / class_n[c], 1e-12);
  }
}

TEST_F(CliTest, GenerateIsDeterministicPerSeed) {
  ASSERT_EQ(run("generate --out " + path("a").string() + " --per-class 6 --seed 11").exit_code, 0);
  ASSERT_EQ(run("generate --out " + path("b").string() + " --per-class 6 --seed 11").exit_code, 0);
  ASSERT_EQ(run("generate --out " + path("c").string() + " --per-class 6 --seed 12").exit_code, 0);
  EXPECT_EQ(read_file(path("a/dataset.jsonl")), read_file(path("b/dataset.jsonl")));
  EXPECT_NE(read_file(path("a/dataset.jsonl")), read_file(path("c/dataset.jsonl")));
}

TEST_F(CliTest, GenerateHonorsDistractionMeanFlag) {
  const auto r = run("generate --out " + path("g").string() +
                     " --per-class 5 --seed 2 --distraction-mean 0");
  ASSERT_EQ(r.exit_code, 0) << r.output;
  for (const auto& row : read_jsonl(path("g/dataset.jsonl")))
    EXPECT_TRUE(row.at("distracting").empty());
}

// ---------------------------------------------------------------------------
// train

TEST_F(CliTest, TrainWithTwoPhaseScheduleLogsTheTransition) {
  const std::string cfg = write_config(tiny_train_config());
  const auto r = run("train --config " + cfg + " --out " + path("t").string() +
                     " --schedule \"1->2\"");
  ASSERT_EQ(r.exit_code, 0) << r.output;

  const json manifest = read_json(path("t/manifest.json"));
  EXPECT_TRUE(manifest.at("complete").get<bool>());
  EXPECT_EQ(manifest.at("mode"), "schedule");
  const auto& transitions = manifest.at("phase_transitions");
  ASSERT_EQ(transitions.size(), 1u);
  EXPECT_EQ(transitions[0].at("from"), "1");
  EXPECT_EQ(transitions[0].at("to"), "2");
  EXPECT_EQ(transitions[0].at("step").get<int>(), 10);  // 20 steps split over 2 phases
  EXPECT_NE(r.output.find("phase transition at step 10: 1 -> 2"), std::string::npos);

  const std::string metrics = read_file(path("t/metrics.csv"));
  EXPECT_NE(metrics.find(",1,"), std::string::npos);
  EXPECT_NE(metrics.find(",2,"), std::string::npos);
  EXPECT_TRUE(fs::exists(path("t/student.ckpt")));
  EXPECT_FALSE(fs::exists(path("t/teacher.ckpt")));  // no agent in schedule mode
}

TEST_F(CliTest, TrainRerunsAreByteIdentical) {
  const std::string cfg = write_config(tiny_train_config());
  ASSERT_EQ(run("train --config " + cfg + " --out " + path("r1").string() +
                " --teacher frar --verbosity 0").exit_code, 0);
  ASSERT_EQ(run("train --config " + cfg + " --out " + path("r2").string() +
                " --teacher frar --verbosity 0").exit_code, 0);
  EXPECT_EQ(read_file(path("r1/metrics.csv")), read_file(path("r2/metrics.csv")));
  EXPECT_EQ(read_file(path("r1/student.ckpt")), read_file(path("r2/student.ckpt")));
  EXPECT_EQ(read_file(path("r1/teacher.ckpt")), read_file(path("r2/teacher.ckpt")));

  const json m1 = read_json(path("r1/manifest.json"));
  json m2 = read_json(path("r2/manifest.json"));
  m2["wall_seconds"] = m1.at("wall_seconds");      // timing may differ
  m2["config"]["out"] = m1.at("config").at("out");  // the runs wrote to different dirs
  EXPECT_EQ(m1, m2);
}

TEST_F(CliTest, TrainFlagsOverrideConfigKeys) {
  json cfg_json = tiny_train_config();
  cfg_json["train"]["total_steps"] = 20;
  const std::string cfg = write_config(cfg_json);
  const auto r = run("train --config " + cfg + " --out " + path("t").string() +
                     " --teacher uniform --steps 10 --seed 99");
  ASSERT_EQ(r.exit_code, 0) << r.output;

  const json manifest = read_json(path("t/manifest.json"));
  EXPECT_EQ(manifest.at("config").at("train").at("total_steps").get<int>(), 10);
  EXPECT_EQ(manifest.at("config").at("seed").get<std::uint64_t>(), 99u);
  EXPECT_EQ(manifest.at("mode"), "uniform");

  // Last metrics row stops at the overridden step budget.
  const std::string metrics = read_file(path("t/metrics.csv"));
  const auto last_line_start = metrics.rfind('\n', metrics.size() - 2);
  EXPECT_EQ(metrics.substr(last_line_start + 1, 3), "10,");
}

TEST_F(CliTest, TrainRejectsUnknownSamplingMode) {
  json cfg_json = tiny_train_config();
  cfg_json["train"]["mode"] = "bogus";
  const std::string cfg = write_config(cfg_json);
  const auto r = run("train --config " + cfg + " --out " + path("t").string());
  EXPECT_NE(r.exit_code, 0);
  EXPECT_NE(r.output.find("mode must be frar, uniform, or schedule"), std::string::npos);
  // Flag values are vetted by the parser itself.
  EXPECT_NE(run("train --teacher bogus --out " + path("t2").string()).exit_code, 0);
}

// ---------------------------------------------------------------------------
// eval

TEST_F(CliTest, EvalOnUntrainedCheckpointReportsNearChance) {
  // Scalar-progression puzzles: their answer foils reuse values already seen
  // in the context, so an untrained network really does sit at 1-in-8 chance
  // (conjunction-category foils skew novel and score systematically lower).
  const json gen_cfg = {
      {"generator",
       {{"distraction_mean", 0.0},
        {"categories",
         {{{"rules",
            {{{"rule", "progression"}, {"stream", "shape"}, {"attribute", "size"}}}}}}}}}};
  const std::string cfg = write_config(gen_cfg);
  ASSERT_EQ(run("generate --config " + cfg + " --out " + path("d").string() +
                " --per-class 800 --seed 21 --verbosity 0").exit_code, 0);

  frar::LenConfig lc;
  lc.embed_dim = 16;
  lc.encoder_hidden = {};
  lc.g_hidden = {8};
  lc.f_hidden = {8};
  frar::LenModel untrained(lc, 1);
  const json meta = {{"kind", "len-student"},
                     {"seed", 1},
                     {"student",
                      {{"embed_dim", lc.embed_dim},
                       {"encoder_hidden", lc.encoder_hidden},
                       {"g_hidden", lc.g_hidden},
                       {"f_hidden", lc.f_hidden},
                       {"two_stream", lc.two_stream},
                       {"type_loss_weight", lc.type_loss_weight},
                       {"type_vocab", lc.type_vocab}}}};
  frar::save_checkpoint(path("untrained.ckpt").string(), meta.dump(), {&untrained.params()});

  const auto r = run("eval --out " + path("e").string() + " --checkpoint " +
                     path("untrained.ckpt").string() + " --data " +
                     path("d/dataset.jsonl").string());
  ASSERT_EQ(r.exit_code, 0) << r.output;
  const json report = read_json(path("e/eval.json"));
  EXPECT_EQ(report.at("total").get<int>(), 800);
  EXPECT_NEAR(report.at("overall_accuracy").get<double>(), 0.125, 0.05);
  const json manifest = read_json(path("e/manifest.json"));
  EXPECT_EQ(manifest.at("report"), report);
}

TEST_F(CliTest, EvalFailureLeavesIncompleteManifestAndNonzeroExit) {
  const auto r = run("eval --out " + path("e").string() + " --checkpoint " +
                     path("missing.ckpt").string() + " --data also-missing.jsonl");
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.output.find("cannot open"), std::string::npos);
  const json manifest = read_json(path("e/manifest.json"));
  EXPECT_FALSE(manifest.at("complete").get<bool>());
  EXPECT_FALSE(manifest.at("error").get<std::string>().empty());
  EXPECT_TRUE(manifest.at("outputs").empty());
}

// ---------------------------------------------------------------------------
// sweep

TEST_F(CliTest, SweepRowCountMatchesGridAndIgnoresWorkerCount) {
  json cfg_json = tiny_train_config();
  cfg_json["train"]["total_steps"] = 10;
  cfg_json["sweep"] = {{"means", {0.0, 1.0}}, {"divergences", {0.0}}, {"seeds", {1, 2}}};
  const std::string cfg = write_config(cfg_json);

  ASSERT_EQ(run("sweep --config " + cfg + " --out " + path("s1").string() +
                " --verbosity 0").exit_code, 0);
  ASSERT_EQ(run("sweep --config " + cfg + " --out " + path("s2").string() +
                " --jobs 3 --verbosity 0").exit_code, 0);

  const std::string csv = read_file(path("s1/sweep.csv"));
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);  // header + 2x1x2 grid
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "mean,divergence,seed,accuracy");
  EXPECT_EQ(read_json(path("s1/manifest.json")).at("rows").get<int>(), 4);
  EXPECT_EQ(csv, read_file(path("s2/sweep.csv")));
}

// ---------------------------------------------------------------------------
// export-embeddings

TEST_F(CliTest, ExportWritesOneRowPerPuzzleDeterministically) {
  const std::string cfg = write_config(tiny_train_config());
  ASSERT_EQ(run("generate --config " + cfg + " --out " + path("d").string() +
                " --per-class 5 --verbosity 0").exit_code, 0);
  ASSERT_EQ(run("train --config " + cfg + " --out " + path("t").string() +
                " --teacher uniform --verbosity 0").exit_code, 0);

  const std::string args = " --checkpoint " + path("t/student.ckpt").string() + " --data " +
                           path("d/dataset.jsonl").string();
  ASSERT_EQ(run("export-embeddings --out " + path("x1").string() + args).exit_code, 0);
  ASSERT_EQ(run("export-embeddings --out " + path("x2").string() + args).exit_code, 0);

  const std::string csv = read_file(path("x1/embeddings.csv"));
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 11);  // header + 10 puzzles
  EXPECT_EQ(csv.substr(0, 30), "id,category,distraction_count,");
  EXPECT_EQ(csv, read_file(path("x2/embeddings.csv")));
  EXPECT_EQ(read_json(path("x1/manifest.json")).at("rows").get<int>(), 10);
}

// ---------------------------------------------------------------------------
// config handling

TEST_F(CliTest, UnknownConfigKeysAreRejectedAtEveryLevel) {
  const std::string top = write_config({{"typo_key", 1}}, "top.json");
  const auto r1 = run("generate --config " + top + " --out " + path("g1").string());
  EXPECT_EQ(r1.exit_code, 1);
  EXPECT_NE(r1.output.find("unknown key 'typo_key' in top level"), std::string::npos);

  const std::string nested =
      write_config({{"student", {{"embed_dims", 64}}}}, "nested.json");
  const auto r2 = run("generate --config " + nested + " --out " + path("g2").string());
  EXPECT_EQ(r2.exit_code, 1);
  EXPECT_NE(r2.output.find("unknown key 'embed_dims' in student"), std::string::npos);
}

TEST_F(CliTest, HelpExitsZeroAndMissingSubcommandFails) {
  EXPECT_EQ(run("--help").exit_code, 0);
  EXPECT_NE(run("").exit_code, 0);
  EXPECT_NE(run("frobnicate").exit_code, 0);
}

}  // namespace

int main(int argc, char** argv) {
  ::testing::InitGoogleTest(&argc, argv);
  return RUN_ALL_TESTS();
}

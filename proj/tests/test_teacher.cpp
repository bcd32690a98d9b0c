#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "frar/teacher.hpp"
#include "grad_check.hpp"
#include "stats.hpp"

namespace {

using namespace frar;

StepRecord make_record(std::vector<double> loss, std::vector<double> acc,
                       std::vector<double> prob, std::vector<double> counts,
                       std::vector<double> action) {
  StepRecord r;
  r.class_loss = std::move(loss);
  r.class_accuracy = std::move(acc);
  r.class_correct_prob = std::move(prob);
  r.batch_counts = std::move(counts);
  r.action = std::move(action);
  return r;
}

std::vector<Transition> random_batch(int n, int state_dim, int classes, Rng& rng) {
  std::vector<Transition> out;
  for (int i = 0; i < n; ++i) {
    Transition tr;
    for (int s = 0; s < state_dim; ++s) tr.state.push_back(rng.uniform(-1.0, 1.0));
    for (int s = 0; s < state_dim; ++s) tr.next_state.push_back(rng.uniform(-1.0, 1.0));
    std::vector<double> logits;
    for (int c = 0; c < classes; ++c) logits.push_back(rng.uniform(-1.0, 1.0));
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double& l : logits) {
      l = std::exp(l - mx);
      z += l;
    }
    for (double& l : logits) l /= z;
    tr.action = logits;
    tr.reward = rng.uniform();
    tr.terminal = (i % 5 == 4);
    out.push_back(std::move(tr));
  }
  return out;
}

// ---------------------------------------------------------------------------
// State featurization

TEST(BuildState, EmptyHistoryIsAllZero) {
  const auto s = build_state({}, 0, 5, 2, 3);
  ASSERT_EQ(s.size(), teacher_state_dim(2, 3));
  for (double v : s) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(BuildState, DimensionMatchesLayoutFormula) {
  EXPECT_EQ(teacher_state_dim(4, 10), 102u);
  const auto s = build_state({}, 0, 1, 4, 10);
  EXPECT_EQ(s.size(), 102u);
}

TEST(BuildState, LayoutPinnedEntryByEntry) {
  const double cap = teacher_loss_cap();
  std::vector<StepRecord> hist;
  hist.push_back(make_record({cap, cap / 2}, {0.25, 0.5}, {0.1, 0.2}, {3, 1}, {0.7, 0.3}));
  hist.push_back(
      make_record({cap / 4, 2 * cap}, {0.75, 1.0}, {0.3, 0.4}, {2, 2}, {0.6, 0.4}));

  const auto s = build_state(hist, 2, 4, 2, 3);
  const std::vector<double> want = {
      0.0, 1.0, 0.25,   // class 0 loss history, zero-padded oldest first
      0.0, 0.5, 1.0,    // class 1 loss history (2*cap clips to 1)
      0.0, 0.25, 0.75,  // class 0 accuracy history
      0.0, 0.5, 1.0,    // class 1 accuracy history
      0.3, 0.4,         // latest mean correct-answer probability
      0.25, 1.0,        // latest normalized loss
      0.75, 1.0,        // latest validation accuracy
      0.6875,           // average historical normalized loss
      0.5, 0.5,         // latest batch fractions
      0.6, 0.4,         // last action
      0.5};             // t / T
  ASSERT_EQ(s.size(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_DOUBLE_EQ(s[i], want[i]) << "index " << i;
}

TEST(BuildState, AllCorrectStepShowsFullAccuracy) {
  std::vector<StepRecord> hist;
  hist.push_back(make_record({0.5, 0.5}, {1.0, 1.0}, {0.9, 0.9}, {1, 1}, {0.5, 0.5}));
  const auto s = build_state(hist, 1, 10, 2, 2);
  // newest slot of each class's accuracy history
  EXPECT_DOUBLE_EQ(s[2 * 2 + 1], 1.0);
  EXPECT_DOUBLE_EQ(s[2 * 2 + 3], 1.0);
  // near-term accuracy block sits after both history blocks and two C-blocks
  const std::size_t acc0 = 2 * 2 * 2 + 2 * 2;
  EXPECT_DOUBLE_EQ(s[acc0], 1.0);
  EXPECT_DOUBLE_EQ(s[acc0 + 1], 1.0);
}

TEST(BuildState, PureFunctionOfInputs) {
  std::vector<StepRecord> hist;
  hist.push_back(make_record({1, 2, 3}, {0.1, 0.2, 0.3}, {0.4, 0.5, 0.6}, {5, 0, 3},
                             {0.2, 0.3, 0.5}));
  EXPECT_EQ(build_state(hist, 3, 7, 3, 4), build_state(hist, 3, 7, 3, 4));
}

TEST(BuildState, RejectsMalformedInputs) {
  std::vector<StepRecord> hist;
  hist.push_back(make_record({1.0}, {0.5}, {0.5}, {1}, {1.0}));
  EXPECT_THROW(build_state(hist, 0, 4, 2, 3), std::invalid_argument);  // width 1, C=2
  EXPECT_THROW(build_state({}, 5, 4, 2, 3), std::invalid_argument);    // t > T
  EXPECT_THROW(build_state({}, 0, 0, 2, 3), std::invalid_argument);    // T = 0
}

// ---------------------------------------------------------------------------
// Reward

TEST(Reward, FractionCorrect) {
  EXPECT_DOUBLE_EQ(reward({true, true, true, false}), 0.75);
  EXPECT_DOUBLE_EQ(reward({false, false}), 0.0);
  EXPECT_DOUBLE_EQ(reward({true}), 1.0);
  EXPECT_THROW(reward({}), EmptyValidationSet);
}

// ---------------------------------------------------------------------------
// Action selection

TEST(SelectAction, OnSimplexUnderBothModes) {
  DdpgConfig cfg;
  cfg.actor_hidden = {16};
  cfg.critic_hidden = {16};
  DdpgAgent agent(6, 4, cfg, 99);
  Rng rng(5);
  for (int i = 0; i < 10000; ++i) {
    std::vector<double> state(6);
    for (auto& v : state) v = rng.uniform(-2.0, 2.0);
    const Action a = agent.select_action(state, i % 2 == 0);
    ASSERT_EQ(a.size(), 4u);
    double sum = 0.0;
    for (double p : a) {
      EXPECT_GE(p, 0.0);
      sum += p;
    }
    EXPECT_NEAR(sum, 1.0, 1e-6);
  }
}

TEST(SelectAction, DeterministicWithoutExploration) {
  DdpgConfig cfg;
  cfg.actor_hidden = {8, 8};
  cfg.critic_hidden = {8};
  DdpgAgent agent(5, 3, cfg, 123);
  const std::vector<double> state = {0.1, -0.4, 0.9, 0.0, 0.3};
  const double sigma_before = agent.noise_sigma();
  const Action a1 = agent.select_action(state, false);
  const Action a2 = agent.select_action(state, false);
  EXPECT_EQ(a1, a2);
  EXPECT_DOUBLE_EQ(agent.noise_sigma(), sigma_before);  // no noise consumed

  EXPECT_THROW(agent.select_action({0.1, 0.2}, false), ShapeError);
}

TEST(SelectAction, ZeroFinalLayerGivesUniform) {
  DdpgConfig cfg;
  cfg.actor_hidden = {8, 8};
  cfg.critic_hidden = {8};
  DdpgAgent agent(5, 4, cfg, 7);
  auto w = agent.actor_store().find("actor.l2.w");
  auto b = agent.actor_store().find("actor.l2.b");
  std::fill(w.mutable_value().begin(), w.mutable_value().end(), 0.0);
  std::fill(b.mutable_value().begin(), b.mutable_value().end(), 0.0);
  const Action a = agent.select_action({1.0, -2.0, 0.5, 0.0, 3.0}, false);
  for (double p : a) EXPECT_DOUBLE_EQ(p, 0.25);
}

TEST(SelectAction, NoiseDecaysToFloor) {
  DdpgConfig cfg;
  cfg.actor_hidden = {8};
  cfg.critic_hidden = {8};
  DdpgAgent agent(3, 2, cfg, 11);
  EXPECT_DOUBLE_EQ(agent.noise_sigma(), 0.5);
  const std::vector<double> state = {0.0, 0.0, 0.0};
  for (int i = 1; i <= 40; ++i) {
    agent.select_action(state, true);
    EXPECT_NEAR(agent.noise_sigma(), std::max(0.05, 0.5 * std::pow(0.995, i)), 1e-12);
  }
  for (int i = 0; i < 1000; ++i) agent.select_action(state, true);
  EXPECT_DOUBLE_EQ(agent.noise_sigma(), 0.05);
}

// ---------------------------------------------------------------------------
// Replay memory

TEST(Replay, FifoEvictionAtCapacityThree) {
  ReplayBuffer buf(3);
  for (int i = 1; i <= 4; ++i) {
    Transition t;
    t.reward = i;
    buf.store(t);
  }
  EXPECT_EQ(buf.size(), 3u);
  std::multiset<double> rewards;
  for (const auto& t : buf.contents()) rewards.insert(t.reward);
  EXPECT_EQ(rewards, (std::multiset<double>{2, 3, 4}));

  Transition t5;
  t5.reward = 5;
  buf.store(t5);
  rewards.clear();
  for (const auto& t : buf.contents()) rewards.insert(t.reward);
  EXPECT_EQ(rewards, (std::multiset<double>{3, 4, 5}));
}

TEST(Replay, OccupancyMonotoneUntilCapacity) {
  ReplayBuffer buf(5);
  for (int i = 0; i < 12; ++i) {
    buf.store(Transition{});
    EXPECT_EQ(buf.size(), static_cast<std::size_t>(std::min(i + 1, 5)));
  }
}

TEST(Replay, SampleFromEmptyThrows) {
  ReplayBuffer buf(4);
  Rng rng(1);
  EXPECT_THROW(buf.sample(1, rng), EmptyBuffer);
}

TEST(Replay, SampleSizeHonoredWithReplacement) {
  ReplayBuffer buf(8);
  for (int i = 0; i < 5; ++i) {
    Transition t;
    t.reward = i;
    buf.store(t);
  }
  Rng rng(2);
  EXPECT_EQ(buf.sample(3, rng).size(), 3u);
  EXPECT_EQ(buf.sample(7, rng).size(), 7u);  // with replacement, > occupancy is fine
}

TEST(Replay, SamplingIsUniform) {
  ReplayBuffer buf(8);
  for (int i = 0; i < 5; ++i) {
    Transition t;
    t.reward = i;
    buf.store(t);
  }
  Rng rng(3);
  std::vector<long> counts(5, 0);
  for (int i = 0; i < 10000; ++i) {
    const auto got = buf.sample(1, rng);
    ++counts[static_cast<std::size_t>(got[0].reward)];
  }
  EXPECT_GT(stats::uniform_chi2_pvalue(counts), 0.01);
}

// ---------------------------------------------------------------------------
// Updates

TEST(Update, GammaZeroTargetsEqualRewards) {
  DdpgConfig cfg;
  cfg.actor_hidden = {8};
  cfg.critic_hidden = {8};
  cfg.gamma = 0.0;
  DdpgAgent agent(5, 3, cfg, 21);
  Rng rng(22);
  const auto batch = random_batch(10, 5, 3, rng);
  const auto y = agent.critic_targets(batch);
  ASSERT_EQ(y.size(), batch.size());
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_DOUBLE_EQ(y[i], batch[i].reward);
}

TEST(Update, TerminalDropsBootstrapAndGammaScalesIt) {
  Rng rng(23);
  auto batch = random_batch(6, 5, 3, rng);
  for (auto& t : batch) t.terminal = false;
  auto terminal_batch = batch;
  for (auto& t : terminal_batch) t.terminal = true;

  DdpgConfig cfg;
  cfg.actor_hidden = {8};
  cfg.critic_hidden = {8};
  cfg.gamma = 0.9;
  DdpgAgent a(5, 3, cfg, 31);
  cfg.gamma = 0.45;
  DdpgAgent b(5, 3, cfg, 31);  // same seed -> identical networks

  const auto ya = a.critic_targets(batch);
  const auto yb = b.critic_targets(batch);
  const auto yt = a.critic_targets(terminal_batch);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    EXPECT_DOUBLE_EQ(yt[i], batch[i].reward);  // terminal: no bootstrap
    const double boot_a = ya[i] - batch[i].reward;
    const double boot_b = yb[i] - batch[i].reward;
    if (std::fabs(boot_b) > 1e-12) EXPECT_NEAR(boot_a / boot_b, 2.0, 1e-9);
  }
}

TEST(Update, CriticGradientPassesFiniteDifference) {
  DdpgConfig cfg;
  cfg.actor_hidden = {8};
  cfg.critic_hidden = {8};
  DdpgAgent agent(5, 3, cfg, 41);
  Rng rng(42);
  const auto batch = random_batch(6, 5, 3, rng);
  const auto y = agent.critic_targets(batch);
  auto loss_fn = [&]() { return agent.critic_loss_graph(batch, y); };
  Rng fd(43);
  const auto rep = gradcheck::check_gradients(agent.critic_store(), loss_fn, fd, 25, 1e-6);
  EXPECT_LT(rep.max_rel_err, 1e-4) << rep.worst;
}

TEST(Update, ActorGradientPassesFiniteDifference) {
  DdpgConfig cfg;
  cfg.actor_hidden = {8};
  cfg.critic_hidden = {8};
  DdpgAgent agent(5, 3, cfg, 51);
  Rng rng(52);
  const auto batch = random_batch(6, 5, 3, rng);
  auto loss_fn = [&]() { return agent.actor_objective_graph(batch); };
  Rng fd(53);
  const auto rep = gradcheck::check_gradients(agent.actor_store(), loss_fn, fd, 25, 1e-6);
  EXPECT_LT(rep.max_rel_err, 1e-4) << rep.worst;
}

TEST(Update, ActorStepClimbsFrozenCritic) {
  DdpgConfig cfg;
  cfg.actor_hidden = {16};
  cfg.critic_hidden = {16};
  cfg.actor_lr = 1e-4;
  cfg.critic_lr = 0.0;  // freeze the critic
  cfg.tau = 1e-9;       // keep targets effectively fixed too
  DdpgAgent agent(6, 3, cfg, 61);
  Rng rng(62);
  const auto batch = random_batch(8, 6, 3, rng);

  const double before = [&] {
    NoGradGuard ng;
    return agent.actor_objective_graph(batch).item();
  }();
  const auto stats = agent.update(batch);
  EXPECT_DOUBLE_EQ(stats.actor_objective, before);  // reported pre-step value
  const double after = [&] {
    NoGradGuard ng;
    return agent.actor_objective_graph(batch).item();
  }();
  EXPECT_GT(after, before);
}

TEST(Update, SoftUpdateCopiesBlendsAndConverges) {
  Rng rng(71);
  ParameterStore online, target;
  online.add("p", {2, 3}, {1, 2, 3, 4, 5, 6});
  target.add("p", {2, 3}, {0, 0, 0, 0, 0, 0});

  soft_update(target, online, 0.0);
  for (double v : target.items()[0].second.value()) EXPECT_DOUBLE_EQ(v, 0.0);

  soft_update(target, online, 0.1);
  EXPECT_DOUBLE_EQ(target.items()[0].second.value()[3], 0.4);

  // geometric approach: distance shrinks by exactly (1 - tau) each call
  double prev = 0.0;
  for (double v : target.items()[0].second.value()) prev += v;
  for (int i = 0; i < 100; ++i) {
    const double gap_before = 1.0 - target.items()[0].second.value()[0] / 1.0;
    soft_update(target, online, 0.1);
    const double gap_after = 1.0 - target.items()[0].second.value()[0] / 1.0;
    if (std::fabs(gap_before) > 1e-300)
      EXPECT_NEAR(gap_after / gap_before, 0.9, 1e-9);
  }

  soft_update(target, online, 1.0);
  EXPECT_EQ(target.items()[0].second.value(), online.items()[0].second.value());

  ParameterStore mismatched;
  mismatched.add("p", {3, 2}, {0, 0, 0, 0, 0, 0});
  EXPECT_THROW(soft_update(mismatched, online, 0.5), ShapeError);
}

TEST(Update, TargetsOnlyMoveThroughSoftUpdate) {
  DdpgConfig cfg;
  cfg.actor_hidden = {8};
  cfg.critic_hidden = {8};
  cfg.tau = 0.02;
  DdpgAgent agent(5, 3, cfg, 81);
  // after construction, targets equal online copies exactly
  for (std::size_t p = 0; p < agent.actor_store().items().size(); ++p)
    EXPECT_EQ(agent.actor_target_store().items()[p].second.value(),
              agent.actor_store().items()[p].second.value());

  Rng rng(82);
  const auto batch = random_batch(8, 5, 3, rng);
  agent.update(batch);
  // online critic moved, target lags strictly between old and new
  bool some_gap = false;
  for (std::size_t p = 0; p < agent.critic_store().items().size(); ++p) {
    const auto& on = agent.critic_store().items()[p].second.value();
    const auto& tg = agent.critic_target_store().items()[p].second.value();
    for (std::size_t i = 0; i < on.size(); ++i)
      if (std::fabs(on[i] - tg[i]) > 1e-9) some_gap = true;
  }
  EXPECT_TRUE(some_gap);
}

TEST(Update, EmptyMinibatchRejected) {
  DdpgConfig cfg;
  cfg.actor_hidden = {8};
  cfg.critic_hidden = {8};
  DdpgAgent agent(5, 3, cfg, 91);
  EXPECT_THROW(agent.update({}), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Reproducibility and checkpointing

TEST(Teacher, BitReproducibleAcrossRuns) {
  auto run = [](std::uint64_t seed) {
    DdpgConfig cfg;
    cfg.actor_hidden = {16};
    cfg.critic_hidden = {16};
    DdpgAgent agent(6, 3, cfg, seed);
    Rng rng(seed + 1);
    std::vector<Action> actions;
    for (int step = 0; step < 5; ++step) {
      std::vector<double> state(6);
      for (auto& v : state) v = rng.uniform(-1.0, 1.0);
      actions.push_back(agent.select_action(state, true));
      const auto batch = random_batch(6, 6, 3, rng);
      agent.update(batch);
    }
    std::vector<std::vector<double>> params;
    for (auto& [n, t] : agent.actor_store().items()) params.push_back(t.value());
    for (auto& [n, t] : agent.critic_target_store().items()) params.push_back(t.value());
    return std::make_pair(actions, params);
  };
  const auto a = run(400);
  const auto b = run(400);
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(Teacher, CheckpointRoundTripIsExact) {
  DdpgConfig cfg;
  cfg.actor_hidden = {8};
  cfg.critic_hidden = {8};
  DdpgAgent agent(4, 2, cfg, 17);
  Rng rng(18);
  agent.update(random_batch(5, 4, 2, rng));

  const auto path = (std::filesystem::temp_directory_path() / "frar_teacher.ckpt").string();
  agent.save(path);

  std::vector<std::vector<double>> before;
  for (auto& [n, t] : agent.actor_store().items()) before.push_back(t.value());
  for (auto& [n, t] : agent.critic_store().items()) before.push_back(t.value());

  // scramble, then restore
  for (auto& [n, t] : agent.actor_store().items())
    std::fill(t.mutable_value().begin(), t.mutable_value().end(), 9.0);
  agent.restore(load_checkpoint(path));

  std::size_t i = 0;
  for (auto& [n, t] : agent.actor_store().items()) EXPECT_EQ(t.value(), before[i++]);
  for (auto& [n, t] : agent.critic_store().items()) EXPECT_EQ(t.value(), before[i++]);
  std::filesystem::remove(path);
}

}  // namespace

int main(int argc, char** argv) {
  ::testing::InitGoogleTest(&argc, argv);
  return RUN_ALL_TESTS();
}

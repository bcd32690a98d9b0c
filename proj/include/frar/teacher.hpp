#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "frar/error.hpp"
#include "frar/nn.hpp"
#include "frar/rng.hpp"
#include "frar/tensor.hpp"

// The teacher: a DDPG actor-critic that reads the student's learning history
// and emits a probability vector over puzzle categories for the next batches.
// The actor produces C logits which a softmax maps onto the simplex;
// exploration adds Gaussian noise in logit space before the softmax.

namespace frar {

// Losses fed to the teacher are clipped to this cap and divided by it, so
// every loss feature lands in [0, 1]. The cap is twice the chance-level
// cross-entropy of an 8-way choice.
inline double teacher_loss_cap() { return 2.0 * std::log(8.0); }

// One completed teacher step of student history. All vectors have one entry
// per category; classes absent from the step's batches carry zeros.
struct StepRecord {
  std::vector<double> class_loss;          // mean train loss per class
  std::vector<double> class_accuracy;      // validation accuracy per class
  std::vector<double> class_correct_prob;  // mean predicted prob. of the answer
  std::vector<double> batch_counts;        // puzzles drawn per class
  std::vector<double> action;              // mixture that produced the batches
};

using Action = std::vector<double>;

struct Transition {
  std::vector<double> state;
  Action action;
  double reward = 0.0;
  std::vector<double> next_state;
  bool terminal = false;
};

struct DdpgConfig {
  std::vector<int> actor_hidden = {128, 128};
  std::vector<int> critic_hidden = {128, 128};
  double gamma = 0.9;           // discount
  double tau = 0.01;            // target soft-update rate
  std::size_t replay_capacity = 10000;
  int update_batch = 64;
  double noise_sigma = 0.5;     // initial logit-space exploration scale
  double noise_decay = 0.995;   // multiplicative, applied once per explore call
  double noise_floor = 0.05;
  int history_window = 10;      // N steps of long-term features
  double actor_lr = 1e-4;
  double critic_lr = 1e-3;
};

inline void validate_config(const DdpgConfig& cfg) {
  if (!(cfg.tau > 0.0 && cfg.tau <= 1.0))
    throw std::invalid_argument("teacher config: tau must be in (0, 1]");
  if (!(cfg.gamma >= 0.0 && cfg.gamma < 1.0))
    throw std::invalid_argument("teacher config: gamma must be in [0, 1)");
  if (cfg.replay_capacity == 0)
    throw std::invalid_argument("teacher config: replay capacity must be positive");
  if (cfg.update_batch <= 0)
    throw std::invalid_argument("teacher config: update batch must be positive");
  if (cfg.history_window <= 0)
    throw std::invalid_argument("teacher config: history window must be positive");
  if (cfg.noise_sigma < 0.0 || cfg.noise_floor < 0.0)
    throw std::invalid_argument("teacher config: noise scales must be nonnegative");
  if (!(cfg.noise_decay > 0.0 && cfg.noise_decay <= 1.0))
    throw std::invalid_argument("teacher config: noise decay must be in (0, 1]");
}

inline std::size_t teacher_state_dim(int num_classes, int history_window) {
  const auto c = static_cast<std::size_t>(num_classes);
  const auto n = static_cast<std::size_t>(history_window);
  return 2 * c * n + 5 * c + 2;
}

// Deterministic featurization of the student's history.
//
// Layout (C = classes, N = history window):
//   [0,        C*N)   per-class train loss, oldest->newest, front-padded 0
//   [C*N,    2*C*N)   per-class validation accuracy, same ordering
//   then near-term features of the latest step:
//   C  mean predicted probability of the correct answer
//   C  train loss
//   C  validation accuracy
//   1  average historical train loss (over the whole run)
//   C  fraction of the last batch drawn per class
//   C  last action
//   1  normalized time t/T
//
// Loss entries are clipped to teacher_loss_cap() and divided by it.
inline std::vector<double> build_state(const std::vector<StepRecord>& history, int t, int T,
                                       int num_classes, int history_window) {
  if (num_classes <= 0) throw std::invalid_argument("build_state: need at least one class");
  if (history_window <= 0) throw std::invalid_argument("build_state: window must be positive");
  if (T <= 0) throw std::invalid_argument("build_state: episode length must be positive");
  if (t < 0 || t > T) throw std::invalid_argument("build_state: step outside [0, episode]");
  const auto C = static_cast<std::size_t>(num_classes);
  const auto N = static_cast<std::size_t>(history_window);
  for (const auto& rec : history) {
    if (rec.class_loss.size() != C || rec.class_accuracy.size() != C ||
        rec.class_correct_prob.size() != C || rec.batch_counts.size() != C ||
        rec.action.size() != C)
      throw std::invalid_argument("build_state: record width does not match class count");
  }

  const double cap = teacher_loss_cap();
  auto norm_loss = [cap](double l) { return std::clamp(l, 0.0, cap) / cap; };

  std::vector<double> s;
  s.reserve(teacher_state_dim(num_classes, history_window));

  // long-term blocks: for each class, the last N steps, zeros where history
  // is shorter than the window
  const std::size_t H = history.size();
  const std::size_t take = std::min(H, N);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t i = 0; i < N - take; ++i) s.push_back(0.0);
    for (std::size_t i = H - take; i < H; ++i) s.push_back(norm_loss(history[i].class_loss[c]));
  }
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t i = 0; i < N - take; ++i) s.push_back(0.0);
    for (std::size_t i = H - take; i < H; ++i) s.push_back(history[i].class_accuracy[c]);
  }

  // near-term block: latest step (zeros before the first step completes)
  const StepRecord* last = history.empty() ? nullptr : &history.back();
  for (std::size_t c = 0; c < C; ++c) s.push_back(last ? last->class_correct_prob[c] : 0.0);
  for (std::size_t c = 0; c < C; ++c) s.push_back(last ? norm_loss(last->class_loss[c]) : 0.0);
  for (std::size_t c = 0; c < C; ++c) s.push_back(last ? last->class_accuracy[c] : 0.0);

  double avg = 0.0;
  for (const auto& rec : history) {
    double step_mean = 0.0;
    for (double l : rec.class_loss) step_mean += norm_loss(l);
    avg += step_mean / static_cast<double>(C);
  }
  s.push_back(history.empty() ? 0.0 : avg / static_cast<double>(H));

  double total_count = 0.0;
  if (last)
    for (double n : last->batch_counts) total_count += n;
  for (std::size_t c = 0; c < C; ++c)
    s.push_back(last && total_count > 0.0 ? last->batch_counts[c] / total_count : 0.0);
  for (std::size_t c = 0; c < C; ++c) s.push_back(last ? last->action[c] : 0.0);

  s.push_back(static_cast<double>(t) / static_cast<double>(T));

  if (s.size() != teacher_state_dim(num_classes, history_window))
    throw std::logic_error("build_state: feature layout does not match declared dimension");
  return s;
}

// Fraction of correctly answered validation puzzles.
inline double reward(const std::vector<bool>& correct) {
  if (correct.empty()) throw EmptyValidationSet("reward: no validation puzzles");
  double ok = 0.0;
  for (bool b : correct) ok += b ? 1.0 : 0.0;
  return ok / static_cast<double>(correct.size());
}

// Ring buffer with FIFO eviction; sampling is uniform with replacement.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : cap_(capacity) {
    if (capacity == 0) throw std::invalid_argument("replay buffer: capacity must be positive");
  }

  std::size_t capacity() const { return cap_; }
  std::size_t size() const { return data_.size(); }

  void store(Transition t) {
    if (data_.size() < cap_) {
      data_.push_back(std::move(t));
    } else {
      data_[next_] = std::move(t);
      next_ = (next_ + 1) % cap_;
    }
  }

  const std::vector<Transition>& contents() const { return data_; }

  std::vector<Transition> sample(std::size_t n, Rng& rng) const {
    if (data_.empty()) throw EmptyBuffer("replay buffer: sample from empty buffer");
    std::vector<Transition> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
      out.push_back(data_[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(data_.size()) - 1))]);
    return out;
  }

 private:
  std::size_t cap_;
  std::size_t next_ = 0;  // oldest element once the buffer is full
  std::vector<Transition> data_;
};

class DdpgAgent {
 public:
  DdpgAgent(int state_dim, int num_classes, DdpgConfig cfg, std::uint64_t seed)
      : cfg_(cfg),
        state_dim_(state_dim),
        num_classes_(num_classes),
        sigma_(cfg.noise_sigma),
        noise_rng_(Rng(seed).derive(0x6e6f6973)),
        actor_opt_(AdamConfig{cfg.actor_lr, 0.9, 0.999, 1e-8}),
        critic_opt_(AdamConfig{cfg.critic_lr, 0.9, 0.999, 1e-8}) {
    validate_config(cfg_);
    if (state_dim <= 0) throw std::invalid_argument("teacher: state dimension must be positive");
    if (num_classes <= 0) throw std::invalid_argument("teacher: need at least one class");
    const auto s = static_cast<std::size_t>(state_dim);
    const auto c = static_cast<std::size_t>(num_classes);
    Rng init = Rng(seed).derive(0x696e6974);
    actor_ = Mlp(actor_store_, "actor", s, cfg_.actor_hidden, c, init);
    critic_ = Mlp(critic_store_, "critic", s + c, cfg_.critic_hidden, 1, init);
    actor_target_ = Mlp(actor_target_store_, "actor_target", s, cfg_.actor_hidden, c, init);
    critic_target_ =
        Mlp(critic_target_store_, "critic_target", s + c, cfg_.critic_hidden, 1, init);
    copy_parameters(actor_target_store_, actor_store_);
    copy_parameters(critic_target_store_, critic_store_);
  }

  const DdpgConfig& config() const { return cfg_; }
  int state_dim() const { return state_dim_; }
  int num_classes() const { return num_classes_; }
  double noise_sigma() const { return sigma_; }

  ParameterStore& actor_store() { return actor_store_; }
  ParameterStore& critic_store() { return critic_store_; }
  ParameterStore& actor_target_store() { return actor_target_store_; }
  ParameterStore& critic_target_store() { return critic_target_store_; }

  // Actor logits -> (optional Gaussian logit noise) -> softmax.
  Action select_action(const std::vector<double>& state, bool explore) {
    if (state.size() != static_cast<std::size_t>(state_dim_))
      throw ShapeError("select_action: state has " + std::to_string(state.size()) +
                       " features, actor expects " + std::to_string(state_dim_));
    std::vector<double> logits;
    {
      NoGradGuard ng;
      const Tensor x = Tensor::from({1, static_cast<std::size_t>(state_dim_)}, state);
      logits = actor_(x).value();
    }
    if (explore) {
      for (double& l : logits) l += noise_rng_.normal(0.0, sigma_);
      sigma_ = std::max(cfg_.noise_floor, sigma_ * cfg_.noise_decay);
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double& l : logits) {
      l = std::exp(l - mx);
      z += l;
    }
    for (double& l : logits) l /= z;
    return logits;
  }

  // r + gamma * Q'(s', mu'(s')), with the bootstrap dropped on terminals.
  std::vector<double> critic_targets(const std::vector<Transition>& batch) const {
    require_batch_(batch);
    NoGradGuard ng;
    const Tensor S2 = pack_states_(batch, /*next=*/true).first;
    const Tensor a2 = softmax(actor_target_(S2));
    const Tensor q2 = critic_target_(concat_cols({S2, a2}));
    std::vector<double> y(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i)
      y[i] = batch[i].reward +
             (batch[i].terminal ? 0.0 : cfg_.gamma * q2.value()[i]);
    return y;
  }

  // Differentiable critic regression loss against fixed targets.
  Tensor critic_loss_graph(const std::vector<Transition>& batch,
                           const std::vector<double>& targets) const {
    require_batch_(batch);
    if (targets.size() != batch.size())
      throw ShapeError("critic loss: target count does not match batch size");
    const auto [S, A] = pack_states_(batch, /*next=*/false);
    const Tensor q = critic_(concat_cols({S, A}));
    const Tensor y = Tensor::from({batch.size(), 1}, targets);
    return mse(q, y);
  }

  // Mean Q(s, mu(s)); ascending this through the frozen critic trains the actor.
  Tensor actor_objective_graph(const std::vector<Transition>& batch) const {
    require_batch_(batch);
    const Tensor S = pack_states_(batch, /*next=*/false).first;
    const Tensor a = softmax(actor_(S));
    return mean(critic_(concat_cols({S, a})));
  }

  struct UpdateStats {
    double critic_loss = 0.0;
    double actor_objective = 0.0;
  };

  UpdateStats update(const std::vector<Transition>& batch) {
    require_batch_(batch);
    UpdateStats stats;

    const std::vector<double> y = critic_targets(batch);
    critic_store_.zero_grad();
    Tensor closs = critic_loss_graph(batch, y);
    stats.critic_loss = closs.item();
    backward(closs);
    critic_opt_.step(critic_store_);

    actor_store_.zero_grad();
    critic_store_.zero_grad();
    Tensor obj = actor_objective_graph(batch);
    stats.actor_objective = obj.item();
    Tensor neg = scale(obj, -1.0);
    backward(neg);
    actor_opt_.step(actor_store_);
    critic_store_.zero_grad();  // discard critic grads from the actor pass

    soft_update(actor_target_store_, actor_store_, cfg_.tau);
    soft_update(critic_target_store_, critic_store_, cfg_.tau);
    return stats;
  }

  void save(const std::string& path, const std::string& meta = "{}") const {
    save_checkpoint(path, meta,
                    {&actor_store_, &critic_store_, &actor_target_store_,
                     &critic_target_store_});
  }

  void restore(const CheckpointData& ckpt) {
    restore_parameters(actor_store_, ckpt);
    restore_parameters(critic_store_, ckpt);
    restore_parameters(actor_target_store_, ckpt);
    restore_parameters(critic_target_store_, ckpt);
  }

 private:
  void require_batch_(const std::vector<Transition>& batch) const {
    if (batch.empty()) throw std::invalid_argument("teacher update: empty minibatch");
    for (const auto& tr : batch) {
      if (tr.state.size() != static_cast<std::size_t>(state_dim_) ||
          tr.next_state.size() != static_cast<std::size_t>(state_dim_))
        throw ShapeError("teacher update: transition state width mismatch");
      if (tr.action.size() != static_cast<std::size_t>(num_classes_))
        throw ShapeError("teacher update: transition action width mismatch");
    }
  }

  // Rows of states plus, for current states, rows of stored actions.
  std::pair<Tensor, Tensor> pack_states_(const std::vector<Transition>& batch,
                                         bool next) const {
    const auto n = batch.size();
    const auto s = static_cast<std::size_t>(state_dim_);
    const auto c = static_cast<std::size_t>(num_classes_);
    std::vector<double> sv(n * s), av(n * c);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& src = next ? batch[i].next_state : batch[i].state;
      std::copy(src.begin(), src.end(), sv.begin() + static_cast<std::ptrdiff_t>(i * s));
      std::copy(batch[i].action.begin(), batch[i].action.end(),
                av.begin() + static_cast<std::ptrdiff_t>(i * c));
    }
    return {Tensor::from({n, s}, std::move(sv)), Tensor::from({n, c}, std::move(av))};
  }

  DdpgConfig cfg_;
  int state_dim_;
  int num_classes_;
  double sigma_;
  Rng noise_rng_;
  Mlp actor_, critic_, actor_target_, critic_target_;
  ParameterStore actor_store_, critic_store_, actor_target_store_, critic_target_store_;
  Adam actor_opt_, critic_opt_;
};

}  // namespace frar

#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "syncsim/environment.hpp"
#include "syncsim/nn.hpp"

namespace syncsim {

// Common contract of every synchronization policy: act() always returns a
// budget-respecting action of the policy's ActionSpace.
class SynchronizerPolicy {
 public:
  explicit SynchronizerPolicy(ActionSpace actions) : actions_(std::move(actions)) {}
  virtual ~SynchronizerPolicy() = default;

  virtual std::string name() const = 0;
  virtual SyncAction act(const SyncState& state, bool explore) = 0;
  virtual void observe(const nn::Transition& transition) { (void)transition; }
  virtual void end_episode(int episode_index) { (void)episode_index; }
  virtual bool learns() const { return false; }

  // Policy name, shape, config and parameters; see docs/schemas.md.
  virtual nlohmann::ordered_json checkpoint() const;
  // Throws ConfigError when the checkpoint does not match this policy.
  virtual void load_checkpoint(const nlohmann::json& doc);

  const ActionSpace& actions() const { return actions_; }

 protected:
  ActionSpace actions_;
};

class RandomSynchronizer : public SynchronizerPolicy {
 public:
  RandomSynchronizer(ActionSpace actions, std::uint64_t seed);
  std::string name() const override { return "random"; }
  SyncAction act(const SyncState& state, bool explore) override;

 private:
  Rng rng_;
};

// Walks the cyclic order 1..N-1, taking the next SB controllers each period.
class RoundRobinSynchronizer : public SynchronizerPolicy {
 public:
  explicit RoundRobinSynchronizer(ActionSpace actions);
  std::string name() const override { return "round_robin"; }
  SyncAction act(const SyncState& state, bool explore) override;
  void reset_cursor() { cursor_ = 0; }

 private:
  int cursor_ = 0;
};

// Synchronizes every peer every period; only valid when SB = N - 1.
class FullSyncSynchronizer : public SynchronizerPolicy {
 public:
  explicit FullSyncSynchronizer(ActionSpace actions);
  std::string name() const override { return "full_sync"; }
  SyncAction act(const SyncState& state, bool explore) override;
};

// ---------------------------------------------------------------------------
// Value-based learners.

// Which state the double-Q target takes its argmax over: the next
// observation (standard double DQN) or the transition's current state.
enum class TargetStyle { kNextObservation, kCurrentState };

struct QLearningConfig {
  double gamma = 0.9;
  double learning_rate = 0.01;
  int batch_size = 256;
  int buffer_capacity = 40000;
  double epsilon_decay = 25.0;
  double kappa = 0.005;
  std::vector<int> hidden = {64, 64};
  double dropout = 0.1;
  double grad_clip = 10.0;
  // Rewards are multiplied by this before they enter the replay buffer.
  double reward_scale = 1e-4;
  int max_staleness = 64;
  TargetStyle target_style = TargetStyle::kNextObservation;

  void validate() const;
};

// 1 / (1 + episode / epsilon_decay)
double exploration_probability(int episode, double epsilon_decay);

// Column-major minibatch view of sampled transitions.
struct Minibatch {
  nn::Matrix states;
  std::vector<int> actions;
  nn::Vector rewards;
  nn::Matrix next_obs;
};
Minibatch make_minibatch(std::span<const nn::Transition* const> transitions);
Minibatch make_minibatch(std::span<const nn::Transition> transitions);

// y = r + gamma * Q_target(next, argmax_a Q_main(x, a)), x = next or current state.
nn::Vector double_q_targets(const nn::MlpParams& main, const nn::MlpParams& target,
                            const Minibatch& batch, double gamma, TargetStyle style);
// y = r + gamma * max_a Q_target(next, a)
nn::Vector dqn_targets(const nn::MlpParams& target, const Minibatch& batch, double gamma);

// One Adam step on the mean squared TD error of the taken actions. Returns
// the loss before the step. Throws DivergenceError.
double td_update(nn::MlpParams& main, nn::AdamState& adam, const Minibatch& batch,
                 const nn::Vector& targets, double dropout, double grad_clip, Rng& rng);

class QLearningSynchronizer : public SynchronizerPolicy {
 public:
  QLearningSynchronizer(ActionSpace actions, QLearningConfig cfg, std::uint64_t seed);

  SyncAction act(const SyncState& state, bool explore) override;
  void observe(const nn::Transition& transition) override;
  void end_episode(int episode_index) override { episode_ = episode_index + 1; }
  bool learns() const override { return true; }
  nlohmann::ordered_json checkpoint() const override;
  void load_checkpoint(const nlohmann::json& doc) override;

  // Samples a minibatch, takes one gradient step and soft-updates the target.
  double update();
  SyncAction greedy(const SyncState& state) const;

  int episode() const { return episode_; }
  const QLearningConfig& config() const { return cfg_; }
  const nn::MlpParams& main_network() const { return main_; }
  const nn::MlpParams& target_network() const { return target_; }
  nn::MlpParams& main_network() { return main_; }
  nn::MlpParams& target_network() { return target_; }
  const nn::ReplayBuffer& replay() const { return replay_; }
  double last_loss() const { return last_loss_; }

 protected:
  virtual nn::Vector targets(const Minibatch& batch) const = 0;

  QLearningConfig cfg_;
  nn::MlpParams main_;
  nn::MlpParams target_;
  nn::AdamState adam_;
  nn::ReplayBuffer replay_;
  Rng rng_;
  int episode_ = 1;
  double last_loss_ = 0.0;
};

// Double deep Q-network synchronizer.
class D2QSynchronizer : public QLearningSynchronizer {
 public:
  using QLearningSynchronizer::QLearningSynchronizer;
  std::string name() const override { return "d2q"; }

 protected:
  nn::Vector targets(const Minibatch& batch) const override;
};

// Single-network DQN target (DQ Scheduler baseline).
class DqSchedulerSynchronizer : public QLearningSynchronizer {
 public:
  using QLearningSynchronizer::QLearningSynchronizer;
  std::string name() const override { return "dqn"; }

 protected:
  nn::Vector targets(const Minibatch& batch) const override;
};

// ---------------------------------------------------------------------------
// PPO.

struct PpoConfig {
  double gamma = 0.01;
  double gae_lambda = 0.95;
  double clip_ratio = 0.2;
  int epochs = 4;
  int minibatch_size = 256;
  int rollout_steps = 512;
  double learning_rate = 0.01;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  std::vector<int> hidden = {64, 64};
  double dropout = 0.0;
  double grad_clip = 10.0;
  double reward_scale = 1e-4;
  int max_staleness = 64;

  void validate() const;
};

nn::Vector softmax(const nn::Vector& logits);
// min(ratio * A, clip(ratio, 1 - c, 1 + c) * A)
double clipped_surrogate(double ratio, double advantage, double clip_ratio);
// Generalized advantage estimates. The recursion restarts after every index
// with segment_end set; values/next_values are V(s_t) and V(s_{t+1}).
std::vector<double> gae_advantages(std::span<const double> rewards, std::span<const double> values,
                                   std::span<const double> next_values,
                                   const std::vector<bool>& segment_end, double gamma,
                                   double lambda);

class PpoSynchronizer : public SynchronizerPolicy {
 public:
  PpoSynchronizer(ActionSpace actions, PpoConfig cfg, std::uint64_t seed);
  std::string name() const override { return "ppo"; }

  // Samples from the policy when exploring, otherwise takes the argmax.
  SyncAction act(const SyncState& state, bool explore) override;
  void observe(const nn::Transition& transition) override;
  void end_episode(int episode_index) override;
  bool learns() const override { return true; }
  nlohmann::ordered_json checkpoint() const override;
  void load_checkpoint(const nlohmann::json& doc) override;

  struct Losses {
    double policy = 0.0;
    double value = 0.0;
    double entropy = 0.0;
  };
  // Runs the clipped-surrogate update on the collected rollout and clears it.
  Losses update();

  nn::Vector action_probabilities(const SyncState& state) const;
  const PpoConfig& config() const { return cfg_; }
  const nn::MlpParams& actor() const { return actor_; }
  const nn::MlpParams& critic() const { return critic_; }
  std::size_t rollout_size() const { return rollout_.size(); }

 private:
  struct Step {
    nn::Transition transition;
    double log_prob_old = 0.0;
    bool segment_end = false;
  };

  PpoConfig cfg_;
  nn::MlpParams actor_;
  nn::MlpParams critic_;
  nn::AdamState actor_adam_;
  nn::AdamState critic_adam_;
  Rng rng_;
  std::vector<Step> rollout_;
};

// Known names: d2q, dqn (alias dq_scheduler), ppo, random, round_robin,
// full_sync. `config` holds policy-specific overrides. Throws ConfigError.
std::unique_ptr<SynchronizerPolicy> make_policy(const std::string& name, const ActionSpace& actions,
                                                int max_staleness, const nlohmann::json& config,
                                                std::uint64_t seed);

std::vector<std::string> known_policies();

QLearningConfig q_config_from_json(const nlohmann::json& doc);
nlohmann::ordered_json q_config_to_json(const QLearningConfig& cfg);
PpoConfig ppo_config_from_json(const nlohmann::json& doc);
nlohmann::ordered_json ppo_config_to_json(const PpoConfig& cfg);

}  // namespace syncsim

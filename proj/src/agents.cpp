#include "syncsim/agents.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "json_fields.hpp"
#include "syncsim/errors.hpp"

namespace syncsim {

using nn::Matrix;
using nn::Vector;

namespace {

Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Vector state_input(const SyncState& s, int max_staleness) {
  return to_vector(normalize_state(s, max_staleness));
}

// Argmax with ties to the smallest index.
int argmax(const Eigen::Ref<const Vector>& v) {
  int best = 0;
  for (int i = 1; i < v.size(); ++i)
    if (v(i) > v(best)) best = i;
  return best;
}

void check_shape(const nlohmann::json& doc, const SynchronizerPolicy& p) {
  if (doc.value("policy", std::string{}) != p.name())
    throw ConfigError(fmt::format("checkpoint is for policy '{}', not '{}'",
                                  doc.value("policy", std::string{"?"}), p.name()));
  if (doc.value("n_domains", -1) != p.actions().n_domains() || doc.value("sb", -1) != p.actions().budget())
    throw ConfigError("checkpoint was trained for a different (N, SB)");
}

}  // namespace

nlohmann::ordered_json SynchronizerPolicy::checkpoint() const {
  return {{"schema", "syncsim.policy.v1"},
          {"policy", name()},
          {"n_domains", actions_.n_domains()},
          {"sb", actions_.budget()}};
}

void SynchronizerPolicy::load_checkpoint(const nlohmann::json& doc) { check_shape(doc, *this); }

// ---------------------------------------------------------------------------

RandomSynchronizer::RandomSynchronizer(ActionSpace actions, std::uint64_t seed)
    : SynchronizerPolicy(std::move(actions)), rng_(make_rng(seed, Stream::kAgent)) {}

SyncAction RandomSynchronizer::act(const SyncState&, bool) {
  return actions_.action(uniform_int(rng_, 0, actions_.size() - 1));
}

RoundRobinSynchronizer::RoundRobinSynchronizer(ActionSpace actions)
    : SynchronizerPolicy(std::move(actions)) {}

SyncAction RoundRobinSynchronizer::act(const SyncState&, bool) {
  const int peers = actions_.n_domains() - 1;
  std::vector<int> selected;
  for (int k = 0; k < actions_.budget(); ++k) selected.push_back(1 + (cursor_ + k) % peers);
  cursor_ = (cursor_ + actions_.budget()) % peers;
  std::sort(selected.begin(), selected.end());
  return actions_.action(actions_.index_of(selected));
}

FullSyncSynchronizer::FullSyncSynchronizer(ActionSpace actions)
    : SynchronizerPolicy(std::move(actions)) {
  if (actions_.budget() != actions_.n_domains() - 1)
    throw ConfigError("full_sync requires SB = N - 1");
}

SyncAction FullSyncSynchronizer::act(const SyncState&, bool) { return actions_.action(0); }

// ---------------------------------------------------------------------------

void QLearningConfig::validate() const {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("q-learning: gamma must be in [0, 1)");
  if (!(kappa > 0.0 && kappa <= 1.0)) throw ConfigError("q-learning: kappa must be in (0, 1]");
  if (batch_size < 1 || buffer_capacity < batch_size)
    throw ConfigError("q-learning: need 1 <= batch_size <= buffer_capacity");
  if (epsilon_decay <= 0.0) throw ConfigError("q-learning: epsilon_decay must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("q-learning: dropout must be in [0, 1)");
  if (learning_rate <= 0.0) throw ConfigError("q-learning: learning_rate must be positive");
  if (hidden.empty()) throw ConfigError("q-learning: need at least one hidden layer");
}

double exploration_probability(int episode, double epsilon_decay) {
  return 1.0 / (1.0 + static_cast<double>(episode) / epsilon_decay);
}

Minibatch make_minibatch(std::span<const nn::Transition* const> transitions) {
  const auto b = static_cast<Eigen::Index>(transitions.size());
  const auto dim = static_cast<Eigen::Index>(transitions.front()->state.size());
  Minibatch mb{Matrix(dim, b), std::vector<int>(b), Vector(b), Matrix(dim, b)};
  for (Eigen::Index j = 0; j < b; ++j) {
    const auto& t = *transitions[j];
    if (static_cast<Eigen::Index>(t.state.size()) != dim || static_cast<Eigen::Index>(t.next_obs.size()) != dim)
      throw ShapeError("transition vectors do not match the state dimension");
    mb.states.col(j) = to_vector(t.state);
    mb.next_obs.col(j) = to_vector(t.next_obs);
    mb.actions[j] = t.action;
    mb.rewards(j) = t.reward;
  }
  return mb;
}

Minibatch make_minibatch(std::span<const nn::Transition> transitions) {
  std::vector<const nn::Transition*> ptrs;
  for (const auto& t : transitions) ptrs.push_back(&t);
  return make_minibatch(std::span<const nn::Transition* const>(ptrs));
}

Vector double_q_targets(const nn::MlpParams& main, const nn::MlpParams& target,
                        const Minibatch& batch, double gamma, TargetStyle style) {
  const Matrix& select_on = style == TargetStyle::kNextObservation ? batch.next_obs : batch.states;
  const Matrix q_main = nn::predict(main, select_on);
  const Matrix q_target = nn::predict(target, batch.next_obs);
  Vector y(batch.rewards.size());
  for (Eigen::Index j = 0; j < y.size(); ++j)
    y(j) = batch.rewards(j) + gamma * q_target(argmax(q_main.col(j)), j);
  return y;
}

Vector dqn_targets(const nn::MlpParams& target, const Minibatch& batch, double gamma) {
  const Matrix q_target = nn::predict(target, batch.next_obs);
  return batch.rewards + gamma * q_target.colwise().maxCoeff().transpose();
}

double td_update(nn::MlpParams& main, nn::AdamState& adam, const Minibatch& batch,
                 const Vector& targets, double dropout, double grad_clip, Rng& rng) {
  auto fwd = nn::forward(main, batch.states, dropout, true, rng);
  const auto b = static_cast<double>(targets.size());
  Matrix grad_q = Matrix::Zero(fwd.q.rows(), fwd.q.cols());
  double loss = 0.0;
  for (Eigen::Index j = 0; j < targets.size(); ++j) {
    const double err = fwd.q(batch.actions[j], j) - targets(j);
    loss += err * err;
    grad_q(batch.actions[j], j) = 2.0 * err / b;
  }
  nn::MlpParams grads = nn::backward(main, fwd.cache, grad_q);
  nn::clip_global_norm(grads, grad_clip);
  nn::adam_step(main, grads, adam);
  return loss / b;
}

QLearningSynchronizer::QLearningSynchronizer(ActionSpace actions, QLearningConfig cfg,
                                             std::uint64_t seed)
    : SynchronizerPolicy(std::move(actions)),
      cfg_((cfg.validate(), std::move(cfg))),
      replay_(cfg_.buffer_capacity),
      rng_(make_rng(seed, Stream::kAgent)) {
  Rng init = make_rng(seed, Stream::kAgentInit);
  main_ = nn::MlpParams::he_uniform(actions_.n_domains(), cfg_.hidden, actions_.size(), init);
  target_ = main_;
  adam_ = nn::AdamState::for_params(main_, {cfg_.learning_rate});
}

SyncAction QLearningSynchronizer::greedy(const SyncState& state) const {
  return actions_.action(argmax(nn::predict(main_, state_input(state, cfg_.max_staleness))));
}

SyncAction QLearningSynchronizer::act(const SyncState& state, bool explore) {
  if (explore && bernoulli(rng_, exploration_probability(episode_, cfg_.epsilon_decay)))
    return actions_.action(uniform_int(rng_, 0, actions_.size() - 1));
  return greedy(state);
}

void QLearningSynchronizer::observe(const nn::Transition& transition) {
  nn::Transition t = transition;
  t.reward *= cfg_.reward_scale;
  replay_.push(std::move(t));
  if (replay_.size() >= static_cast<std::size_t>(cfg_.batch_size)) update();
}

double QLearningSynchronizer::update() {
  const auto sampled = replay_.sample(cfg_.batch_size, rng_);
  const Minibatch batch = make_minibatch(std::span<const nn::Transition* const>(sampled));
  const Vector y = targets(batch);
  last_loss_ = td_update(main_, adam_, batch, y, cfg_.dropout, cfg_.grad_clip, rng_);
  nn::soft_update(target_, main_, cfg_.kappa);
  return last_loss_;
}

nlohmann::ordered_json QLearningSynchronizer::checkpoint() const {
  auto doc = SynchronizerPolicy::checkpoint();
  doc["episode"] = episode_;
  doc["config"] = q_config_to_json(cfg_);
  doc["networks"] = {{"main", nn::params_to_json(main_)}, {"target", nn::params_to_json(target_)}};
  return doc;
}

void QLearningSynchronizer::load_checkpoint(const nlohmann::json& doc) {
  check_shape(doc, *this);
  auto main = nn::params_from_json(doc.at("networks").at("main"));
  auto target = nn::params_from_json(doc.at("networks").at("target"));
  if (main.input_dim() != main_.input_dim() || main.output_dim() != main_.output_dim())
    throw ConfigError("checkpoint network shape does not match the action space");
  main_ = std::move(main);
  target_ = std::move(target);
  adam_ = nn::AdamState::for_params(main_, {cfg_.learning_rate});
  episode_ = doc.value("episode", episode_);
}

Vector D2QSynchronizer::targets(const Minibatch& batch) const {
  return double_q_targets(main_, target_, batch, cfg_.gamma, cfg_.target_style);
}

Vector DqSchedulerSynchronizer::targets(const Minibatch& batch) const {
  return dqn_targets(target_, batch, cfg_.gamma);
}

// ---------------------------------------------------------------------------

void PpoConfig::validate() const {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("ppo: gamma must be in [0, 1)");
  if (gae_lambda < 0.0 || gae_lambda > 1.0) throw ConfigError("ppo: gae_lambda must be in [0, 1]");
  if (clip_ratio <= 0.0) throw ConfigError("ppo: clip_ratio must be positive");
  if (epochs < 1 || minibatch_size < 1 || rollout_steps < 1)
    throw ConfigError("ppo: epochs, minibatch_size and rollout_steps must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("ppo: dropout must be in [0, 1)");
  if (learning_rate <= 0.0) throw ConfigError("ppo: learning_rate must be positive");
  if (hidden.empty()) throw ConfigError("ppo: need at least one hidden layer");
}

Vector softmax(const Vector& logits) {
  const Vector shifted = (logits.array() - logits.maxCoeff()).exp().matrix();
  return shifted / shifted.sum();
}

double clipped_surrogate(double ratio, double advantage, double clip_ratio) {
  const double clipped = std::clamp(ratio, 1.0 - clip_ratio, 1.0 + clip_ratio);
  return std::min(ratio * advantage, clipped * advantage);
}

std::vector<double> gae_advantages(std::span<const double> rewards, std::span<const double> values,
                                   std::span<const double> next_values,
                                   const std::vector<bool>& segment_end, double gamma,
                                   double lambda) {
  std::vector<double> adv(rewards.size());
  double running = 0.0;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    if (segment_end[i]) running = 0.0;
    const double delta = rewards[i] + gamma * next_values[i] - values[i];
    running = delta + gamma * lambda * running;
    adv[i] = running;
  }
  return adv;
}

PpoSynchronizer::PpoSynchronizer(ActionSpace actions, PpoConfig cfg, std::uint64_t seed)
    : SynchronizerPolicy(std::move(actions)),
      cfg_((cfg.validate(), std::move(cfg))),
      rng_(make_rng(seed, Stream::kAgent)) {
  Rng init = make_rng(seed, Stream::kAgentInit);
  actor_ = nn::MlpParams::he_uniform(actions_.n_domains(), cfg_.hidden, actions_.size(), init);
  critic_ = nn::MlpParams::he_uniform(actions_.n_domains(), cfg_.hidden, 1, init);
  // Small output weights start the policy close to uniform.
  actor_.layers.back().weight *= 0.01;
  actor_adam_ = nn::AdamState::for_params(actor_, {cfg_.learning_rate});
  critic_adam_ = nn::AdamState::for_params(critic_, {cfg_.learning_rate});
}

Vector PpoSynchronizer::action_probabilities(const SyncState& state) const {
  return softmax(nn::predict(actor_, state_input(state, cfg_.max_staleness)));
}

SyncAction PpoSynchronizer::act(const SyncState& state, bool explore) {
  const Vector probs = action_probabilities(state);
  if (!explore) return actions_.action(argmax(probs));
  std::discrete_distribution<int> pick(probs.data(), probs.data() + probs.size());
  return actions_.action(pick(rng_));
}

void PpoSynchronizer::observe(const nn::Transition& transition) {
  Step step;
  step.transition = transition;
  step.transition.reward *= cfg_.reward_scale;
  const Vector probs = softmax(nn::predict(actor_, to_vector(transition.state)));
  step.log_prob_old = std::log(std::max(probs(transition.action), 1e-300));
  rollout_.push_back(std::move(step));
  if (static_cast<int>(rollout_.size()) >= cfg_.rollout_steps) update();
}

void PpoSynchronizer::end_episode(int) {
  if (!rollout_.empty()) rollout_.back().segment_end = true;
}

PpoSynchronizer::Losses PpoSynchronizer::update() {
  Losses losses;
  if (rollout_.empty()) return losses;
  const std::size_t n = rollout_.size();
  std::vector<const nn::Transition*> ptrs;
  for (const auto& s : rollout_) ptrs.push_back(&s.transition);
  const Minibatch all = make_minibatch(std::span<const nn::Transition* const>(ptrs));
  const Vector values = nn::predict(critic_, all.states).row(0).transpose();
  const Vector next_values = nn::predict(critic_, all.next_obs).row(0).transpose();
  std::vector<double> rewards(n), v(n), nv(n);
  std::vector<bool> ends(n);
  for (std::size_t i = 0; i < n; ++i) {
    rewards[i] = all.rewards(i);
    v[i] = values(i);
    nv[i] = next_values(i);
    ends[i] = rollout_[i].segment_end || i + 1 == n;
  }
  const std::vector<double> adv_raw =
      gae_advantages(rewards, v, nv, ends, cfg_.gamma, cfg_.gae_lambda);
  std::vector<double> returns(n);
  for (std::size_t i = 0; i < n; ++i) returns[i] = adv_raw[i] + v[i];
  const double mean = std::accumulate(adv_raw.begin(), adv_raw.end(), 0.0) / n;
  double var = 0.0;
  for (double a : adv_raw) var += (a - mean) * (a - mean);
  const double sd = std::sqrt(var / n) + 1e-8;
  std::vector<double> adv(n);
  for (std::size_t i = 0; i < n; ++i) adv[i] = (adv_raw[i] - mean) / sd;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  int batches = 0;
  for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng_);
    for (std::size_t start = 0; start < n; start += cfg_.minibatch_size) {
      const std::size_t end = std::min(n, start + cfg_.minibatch_size);
      const auto m = static_cast<Eigen::Index>(end - start);
      Matrix x(all.states.rows(), m);
      for (Eigen::Index j = 0; j < m; ++j) x.col(j) = all.states.col(order[start + j]);

      auto actor_fwd = nn::forward(actor_, x, cfg_.dropout, true, rng_);
      Matrix grad_logits = Matrix::Zero(actor_fwd.q.rows(), m);
      double policy_loss = 0.0, entropy = 0.0;
      for (Eigen::Index j = 0; j < m; ++j) {
        const std::size_t i = order[start + j];
        const Vector p = softmax(actor_fwd.q.col(j));
        const Vector logp = p.array().max(1e-300).log().matrix();
        const int a = rollout_[i].transition.action;
        const double ratio = std::exp(logp(a) - rollout_[i].log_prob_old);
        policy_loss -= clipped_surrogate(ratio, adv[i], cfg_.clip_ratio);
        const double h = -(p.array() * logp.array()).sum();
        entropy += h;
        // The unclipped branch is active unless clipping bounds the objective.
        const bool clipped = (adv[i] > 0 && ratio > 1.0 + cfg_.clip_ratio) ||
                             (adv[i] < 0 && ratio < 1.0 - cfg_.clip_ratio);
        Vector g = Vector::Zero(p.size());
        if (!clipped) {
          g = p * (adv[i] * ratio);
          g(a) -= adv[i] * ratio;
        }
        // d(-entropy_coef * H)/dz_k = entropy_coef * p_k * (log p_k + H)
        g.array() += cfg_.entropy_coef * p.array() * (logp.array() + h);
        grad_logits.col(j) = g / static_cast<double>(m);
      }
      auto actor_grads = nn::backward(actor_, actor_fwd.cache, grad_logits);
      nn::clip_global_norm(actor_grads, cfg_.grad_clip);
      nn::adam_step(actor_, actor_grads, actor_adam_);

      auto critic_fwd = nn::forward(critic_, x, cfg_.dropout, true, rng_);
      Matrix grad_v(1, m);
      double value_loss = 0.0;
      for (Eigen::Index j = 0; j < m; ++j) {
        const double err = critic_fwd.q(0, j) - returns[order[start + j]];
        value_loss += err * err;
        grad_v(0, j) = cfg_.value_coef * 2.0 * err / static_cast<double>(m);
      }
      auto critic_grads = nn::backward(critic_, critic_fwd.cache, grad_v);
      nn::clip_global_norm(critic_grads, cfg_.grad_clip);
      nn::adam_step(critic_, critic_grads, critic_adam_);

      losses.policy += policy_loss / m;
      losses.value += value_loss / m;
      losses.entropy += entropy / m;
      ++batches;
    }
  }
  losses.policy /= batches;
  losses.value /= batches;
  losses.entropy /= batches;
  rollout_.clear();
  return losses;
}

nlohmann::ordered_json PpoSynchronizer::checkpoint() const {
  auto doc = SynchronizerPolicy::checkpoint();
  doc["config"] = ppo_config_to_json(cfg_);
  doc["networks"] = {{"actor", nn::params_to_json(actor_)}, {"critic", nn::params_to_json(critic_)}};
  return doc;
}

void PpoSynchronizer::load_checkpoint(const nlohmann::json& doc) {
  check_shape(doc, *this);
  auto actor = nn::params_from_json(doc.at("networks").at("actor"));
  auto critic = nn::params_from_json(doc.at("networks").at("critic"));
  if (actor.input_dim() != actor_.input_dim() || actor.output_dim() != actor_.output_dim())
    throw ConfigError("checkpoint network shape does not match the action space");
  actor_ = std::move(actor);
  critic_ = std::move(critic);
  actor_adam_ = nn::AdamState::for_params(actor_, {cfg_.learning_rate});
  critic_adam_ = nn::AdamState::for_params(critic_, {cfg_.learning_rate});
  rollout_.clear();
}

// ---------------------------------------------------------------------------

QLearningConfig q_config_from_json(const nlohmann::json& doc) {
  QLearningConfig c;
  std::string style = "next_obs_ddqn";
  detail::FieldReader(doc, "q-learning config")
      .get("gamma", c.gamma)
      .get("learning_rate", c.learning_rate)
      .get("batch_size", c.batch_size)
      .get("buffer_capacity", c.buffer_capacity)
      .get("epsilon_decay", c.epsilon_decay)
      .get("kappa", c.kappa)
      .get("hidden", c.hidden)
      .get("dropout", c.dropout)
      .get("grad_clip", c.grad_clip)
      .get("reward_scale", c.reward_scale)
      .get("max_staleness", c.max_staleness)
      .get("target_style", style)
      .finish();
  if (style == "next_obs_ddqn") {
    c.target_style = TargetStyle::kNextObservation;
  } else if (style == "current_state_argmax") {
    c.target_style = TargetStyle::kCurrentState;
  } else {
    throw ConfigError("unknown target_style '" + style + "'");
  }
  c.validate();
  return c;
}

nlohmann::ordered_json q_config_to_json(const QLearningConfig& c) {
  return {{"gamma", c.gamma},
          {"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"buffer_capacity", c.buffer_capacity},
          {"epsilon_decay", c.epsilon_decay},
          {"kappa", c.kappa},
          {"hidden", c.hidden},
          {"dropout", c.dropout},
          {"grad_clip", c.grad_clip},
          {"reward_scale", c.reward_scale},
          {"max_staleness", c.max_staleness},
          {"target_style", c.target_style == TargetStyle::kNextObservation ? "next_obs_ddqn"
                                                                           : "current_state_argmax"}};
}

PpoConfig ppo_config_from_json(const nlohmann::json& doc) {
  PpoConfig c;
  detail::FieldReader(doc, "ppo config")
      .get("gamma", c.gamma)
      .get("gae_lambda", c.gae_lambda)
      .get("clip_ratio", c.clip_ratio)
      .get("epochs", c.epochs)
      .get("minibatch_size", c.minibatch_size)
      .get("rollout_steps", c.rollout_steps)
      .get("learning_rate", c.learning_rate)
      .get("entropy_coef", c.entropy_coef)
      .get("value_coef", c.value_coef)
      .get("hidden", c.hidden)
      .get("dropout", c.dropout)
      .get("grad_clip", c.grad_clip)
      .get("reward_scale", c.reward_scale)
      .get("max_staleness", c.max_staleness)
      .finish();
  c.validate();
  return c;
}

nlohmann::ordered_json ppo_config_to_json(const PpoConfig& c) {
  return {{"gamma", c.gamma},
          {"gae_lambda", c.gae_lambda},
          {"clip_ratio", c.clip_ratio},
          {"epochs", c.epochs},
          {"minibatch_size", c.minibatch_size},
          {"rollout_steps", c.rollout_steps},
          {"learning_rate", c.learning_rate},
          {"entropy_coef", c.entropy_coef},
          {"value_coef", c.value_coef},
          {"hidden", c.hidden},
          {"dropout", c.dropout},
          {"grad_clip", c.grad_clip},
          {"reward_scale", c.reward_scale},
          {"max_staleness", c.max_staleness}};
}

std::vector<std::string> known_policies() {
  return {"d2q", "dqn", "ppo", "random", "round_robin", "full_sync"};
}

std::unique_ptr<SynchronizerPolicy> make_policy(const std::string& name, const ActionSpace& actions,
                                                int max_staleness, const nlohmann::json& config,
                                                std::uint64_t seed) {
  auto with_staleness = [&] {
    nlohmann::json c = config.is_null() ? nlohmann::json::object() : config;
    if (!c.contains("max_staleness")) c["max_staleness"] = max_staleness;
    return c;
  };
  auto no_config = [&] {
    if (!config.is_null() && !config.empty())
      throw ConfigError("policy '" + name + "' takes no configuration");
  };
  if (name == "d2q")
    return std::make_unique<D2QSynchronizer>(actions, q_config_from_json(with_staleness()), seed);
  if (name == "dqn" || name == "dq_scheduler")
    return std::make_unique<DqSchedulerSynchronizer>(actions, q_config_from_json(with_staleness()), seed);
  if (name == "ppo")
    return std::make_unique<PpoSynchronizer>(actions, ppo_config_from_json(with_staleness()), seed);
  if (name == "random") {
    no_config();
    return std::make_unique<RandomSynchronizer>(actions, seed);
  }
  if (name == "round_robin") {
    no_config();
    return std::make_unique<RoundRobinSynchronizer>(actions);
  }
  if (name == "full_sync") {
    no_config();
    return std::make_unique<FullSyncSynchronizer>(actions);
  }
  throw ConfigError("unknown policy '" + name + "'");
}

}  // namespace syncsim

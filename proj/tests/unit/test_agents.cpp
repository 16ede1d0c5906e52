#include <doctest.h>

#include <cmath>
#include <map>

#include "syncsim/agents.hpp"
#include "syncsim/errors.hpp"

using namespace syncsim;
using nn::Matrix;
using nn::Vector;

namespace {

SyncState zeros(int n) { return SyncState{std::vector<int>(n, 0)}; }

// 1 input -> 1 hidden (identity) -> 2 outputs.
nn::MlpParams tiny_net(double w0, double w1, double b0 = 0.0, double b1 = 0.0) {
  nn::MlpParams p;
  p.layers.push_back({Matrix::Ones(1, 1), Vector::Zero(1)});
  Matrix w(2, 1);
  w << w0, w1;
  Vector b(2);
  b << b0, b1;
  p.layers.push_back({w, b});
  return p;
}

Minibatch one_transition(double s, int a, double r, double next) {
  nn::Transition t{{s}, a, r, {next}};
  return make_minibatch(std::span<const nn::Transition>(&t, 1));
}

}  // namespace

TEST_CASE("exploration schedule") {
  CHECK(exploration_probability(0, 25.0) == 1.0);
  CHECK(exploration_probability(25, 25.0) == 0.5);
  CHECK(exploration_probability(50, 25.0) == 1.0 / 3.0);
  CHECK(exploration_probability(100, 25.0) == 0.2);
  CHECK(exploration_probability(1000000, 25.0) < 1e-4);
}

TEST_CASE("random synchronizer") {
  RandomSynchronizer single(ActionSpace(5, 4), 1);
  for (int i = 0; i < 20; ++i) CHECK(single.act(zeros(5), true).selected == std::vector<int>{1, 2, 3, 4});

  RandomSynchronizer r(ActionSpace(5, 2), 2);
  std::map<std::vector<int>, int> counts;
  const int draws = 60000;
  for (int i = 0; i < draws; ++i) {
    const auto a = r.act(zeros(5), false);
    CHECK_FALSE(a.contains(0));
    ++counts[a.selected];
  }
  REQUIRE(counts.size() == 6);
  for (const auto& [subset, c] : counts) {
    const double f = static_cast<double>(c) / draws;
    CHECK(std::abs(f - 1.0 / 6.0) <= 0.03 / 6.0);
  }
}

TEST_CASE("round robin order") {
  RoundRobinSynchronizer rr7(ActionSpace(7, 3));
  CHECK(rr7.act(zeros(7), false).selected == std::vector<int>{1, 2, 3});
  CHECK(rr7.act(zeros(7), false).selected == std::vector<int>{4, 5, 6});
  CHECK(rr7.act(zeros(7), false).selected == std::vector<int>{1, 2, 3});

  RoundRobinSynchronizer rr5(ActionSpace(5, 2));
  CHECK(rr5.act(zeros(5), false).selected == std::vector<int>{1, 2});
  CHECK(rr5.act(zeros(5), false).selected == std::vector<int>{3, 4});
  CHECK(rr5.act(zeros(5), false).selected == std::vector<int>{1, 2});

  for (int n = 3; n <= 10; ++n) {
    for (int sb = 1; sb < n; ++sb) {
      RoundRobinSynchronizer rr(ActionSpace(n, sb));
      const int window = (n - 1 + sb - 1) / sb;
      std::vector<int> last(n, -1);
      for (int t = 0; t < 50; ++t) {
        for (int d : rr.act(zeros(n), false).selected) last[d] = t;
        if (t >= window - 1)
          for (int d = 1; d < n; ++d) REQUIRE(t - last[d] < window);
      }
    }
  }
}

TEST_CASE("full sync requires the whole budget") {
  CHECK_THROWS_AS(FullSyncSynchronizer(ActionSpace(5, 3)), ConfigError);
  FullSyncSynchronizer f(ActionSpace(5, 4));
  CHECK(f.act(zeros(5), true).selected == std::vector<int>{1, 2, 3, 4});
}

TEST_CASE("myopic targets equal rewards") {
  const auto main = tiny_net(1.0, -2.0), target = tiny_net(3.0, 0.5);
  const auto mb = one_transition(0.5, 1, -0.7, 0.8);
  CHECK(double_q_targets(main, target, mb, 0.0, TargetStyle::kNextObservation)(0) == -0.7);
  CHECK(dqn_targets(target, mb, 0.0)(0) == -0.7);
}

TEST_CASE("double and single targets by hand") {
  // Next obs 0.8: main Q = (0.8, -1.6) picks action 0; target Q = (2.4, 0.4).
  const auto main = tiny_net(1.0, -2.0), target = tiny_net(3.0, 0.5);
  const auto mb = one_transition(0.5, 1, -0.7, 0.8);
  CHECK(double_q_targets(main, target, mb, 0.9, TargetStyle::kNextObservation)(0) ==
        doctest::Approx(-0.7 + 0.9 * 2.4));
  CHECK(dqn_targets(target, mb, 0.9)(0) == doctest::Approx(-0.7 + 0.9 * 2.4));

  // Main prefers action 1 where the target is lower: double Q uses 0.4.
  const auto main2 = tiny_net(-1.0, 2.0);
  CHECK(double_q_targets(main2, target, mb, 0.9, TargetStyle::kNextObservation)(0) ==
        doctest::Approx(-0.7 + 0.9 * 0.4));
  CHECK(dqn_targets(target, mb, 0.9)(0) == doctest::Approx(-0.7 + 0.9 * 2.4));

  // main3 Q: current state (1.5, 1.0), next obs (1.2, 1.6).
  const auto main3 = tiny_net(-1.0, 2.0, 2.0, 0.0);
  CHECK(double_q_targets(main3, target, mb, 0.9, TargetStyle::kCurrentState)(0) ==
        doctest::Approx(-0.7 + 0.9 * 2.4));
  CHECK(double_q_targets(main3, target, mb, 0.9, TargetStyle::kNextObservation)(0) ==
        doctest::Approx(-0.7 + 0.9 * 0.4));
}

TEST_CASE("identical networks make double and single targets coincide") {
  Rng rng(3);
  const auto net = nn::MlpParams::he_uniform(4, std::vector<int>{8}, 5, rng);
  std::vector<nn::Transition> ts;
  for (int i = 0; i < 16; ++i) {
    ts.push_back({{uniform_real(rng, 0, 1), uniform_real(rng, 0, 1), uniform_real(rng, 0, 1), 0.0},
                  i % 5, -uniform_real(rng, 0, 1),
                  {uniform_real(rng, 0, 1), uniform_real(rng, 0, 1), uniform_real(rng, 0, 1), 1.0}});
  }
  const auto mb = make_minibatch(std::span<const nn::Transition>(ts));
  const Vector a = double_q_targets(net, net, mb, 0.9, TargetStyle::kNextObservation);
  const Vector b = dqn_targets(net, mb, 0.9);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("single-transition TD step by hand") {
  // State 0.5, action 1, reward -0.7, next 0.8, gamma 0.9.
  auto main = tiny_net(1.0, -2.0, 0.1, 0.2);
  const auto target = tiny_net(3.0, 0.5);
  const auto mb = one_transition(0.5, 1, -0.7, 0.8);
  const Vector y = double_q_targets(main, target, mb, 0.9, TargetStyle::kNextObservation);
  // main(0.8) = (0.9, -1.4) -> argmax 0; target(0.8)[0] = 2.4
  const double y_hand = -0.7 + 0.9 * 2.4;
  REQUIRE(y(0) == doctest::Approx(y_hand));

  auto adam = nn::AdamState::for_params(main, {0.01});
  Rng rng(1);
  const double q_before = -2.0 * 0.5 + 0.2;
  const double loss = td_update(main, adam, mb, y, 0.0, 10.0, rng);
  CHECK(loss == doctest::Approx((q_before - y_hand) * (q_before - y_hand)));

  // The first Adam step moves each parameter with a non-zero gradient by -lr * sign(g).
  const double err = q_before - y_hand;
  CHECK(main.layers[1].weight(1, 0) == doctest::Approx(-2.0 + 0.01).epsilon(1e-6));
  CHECK(main.layers[1].bias(1) == doctest::Approx(0.2 + 0.01).epsilon(1e-6));
  CHECK(main.layers[1].weight(0, 0) == 1.0);
  CHECK(main.layers[1].bias(0) == 0.1);
  const double hidden_grad = 2.0 * err * -2.0 * 0.5;
  CHECK(main.layers[0].weight(0, 0) == doctest::Approx(1.0 - 0.01 * (hidden_grad > 0 ? 1 : -1)).epsilon(1e-6));

  const double q_after = main.layers[1].weight(1, 0) * (main.layers[0].weight(0, 0) * 0.5 + main.layers[0].bias(0)) +
                         main.layers[1].bias(1);
  const double post_loss = (q_after - y_hand) * (q_after - y_hand);
  CHECK(post_loss < loss);
  CHECK(nn::predict(main, Vector(Vector::Constant(1, 0.5)))(1) == doctest::Approx(q_after));
}

TEST_CASE("q-learner updates only once the buffer holds a batch") {
  QLearningConfig cfg;
  cfg.batch_size = 8;
  cfg.buffer_capacity = 100;
  cfg.hidden = {8};
  D2QSynchronizer agent(ActionSpace(4, 2), cfg, 5);
  const auto before = agent.main_network();
  for (int i = 0; i < 7; ++i) agent.observe({{0, 0.1, 0.2, 0.3}, i % 3, -1000.0, {0, 0.2, 0.3, 0.4}});
  CHECK(nn::max_abs_difference(before, agent.main_network()) == 0.0);
  CHECK(agent.replay().at(0).reward == doctest::Approx(-0.1));
  agent.observe({{0, 0.1, 0.2, 0.3}, 1, -1000.0, {0, 0.2, 0.3, 0.4}});
  CHECK(nn::max_abs_difference(before, agent.main_network()) > 0.0);
  CHECK(nn::max_abs_difference(agent.target_network(), before) > 0.0);
  CHECK(agent.last_loss() > 0.0);
}

TEST_CASE("hard target update copies the main network") {
  QLearningConfig cfg;
  cfg.batch_size = 2;
  cfg.kappa = 1.0;
  cfg.hidden = {4};
  DqSchedulerSynchronizer agent(ActionSpace(3, 1), cfg, 6);
  for (int i = 0; i < 3; ++i) agent.observe({{0, 0.5, 0.5}, i % 2, -1.0, {0, 0.5, 0.5}});
  CHECK(nn::max_abs_difference(agent.main_network(), agent.target_network()) == 0.0);
}

TEST_CASE("episode counter drives exploration") {
  QLearningConfig cfg;
  cfg.epsilon_decay = 1e-9;  // effectively greedy from the first episode
  D2QSynchronizer agent(ActionSpace(7, 3), cfg, 7);
  CHECK(agent.episode() == 1);
  const auto greedy = agent.greedy(zeros(7));
  for (int i = 0; i < 50; ++i) CHECK(agent.act(zeros(7), true).index == greedy.index);
  agent.end_episode(4);
  CHECK(agent.episode() == 5);
}

TEST_CASE("clipped surrogate") {
  CHECK(clipped_surrogate(1.5, 1.0, 0.2) == doctest::Approx(1.2));
  CHECK(clipped_surrogate(0.5, 1.0, 0.2) == doctest::Approx(0.5));
  CHECK(clipped_surrogate(0.5, -1.0, 0.2) == doctest::Approx(-0.8));
  CHECK(clipped_surrogate(1.5, -1.0, 0.2) == doctest::Approx(-1.5));
}

TEST_CASE("softmax") {
  Vector z(3);
  z << 1000.0, 1000.0, 1000.0;
  const Vector p = softmax(z);
  for (int i = 0; i < 3; ++i) CHECK(p(i) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("GAE matches the discounted sum of TD errors") {
  Rng rng(8);
  const int n = 12;
  std::vector<double> r(n), v(n), nv(n);
  std::vector<bool> ends(n, false);
  ends[4] = ends[11] = true;
  for (int i = 0; i < n; ++i) {
    r[i] = uniform_real(rng, -1, 1);
    v[i] = uniform_real(rng, -1, 1);
    nv[i] = uniform_real(rng, -1, 1);
  }
  const double g = 0.9, l = 0.8;
  const auto adv = gae_advantages(r, v, nv, ends, g, l);
  for (int t = 0; t < n; ++t) {
    double expect = 0.0, w = 1.0;
    for (int k = t; k < n; ++k) {
      expect += w * (r[k] + g * nv[k] - v[k]);
      w *= g * l;
      if (ends[k]) break;
    }
    CHECK(adv[t] == doctest::Approx(expect).epsilon(1e-12));
  }
  // With gamma = 0.01 the next step carries a weight of at most 0.01.
  const auto myopic = gae_advantages(r, v, nv, ends, 0.01, 0.95);
  for (int t = 0; t < n; ++t) CHECK(std::abs(myopic[t] - (r[t] + 0.01 * nv[t] - v[t])) < 0.01 * 2.0);
}

TEST_CASE("untrained PPO is close to uniform") {
  PpoConfig cfg;
  PpoSynchronizer agent(ActionSpace(7, 3), cfg, 9);
  const Vector p = agent.action_probabilities(zeros(7));
  REQUIRE(p.size() == 20);
  CHECK(p.sum() == doctest::Approx(1.0));
  for (int i = 0; i < p.size(); ++i) CHECK(p(i) == doctest::Approx(1.0 / 20.0).epsilon(0.05));

  nn::MlpParams zero = nn::MlpParams::zeros_like(agent.actor());
  Vector uniform = softmax(nn::predict(zero, Vector(Vector::Zero(7))));
  for (int i = 0; i < 20; ++i) CHECK(uniform(i) == doctest::Approx(1.0 / 20.0));
}

TEST_CASE("PPO learns a one-state bandit") {
  PpoConfig cfg;
  cfg.rollout_steps = 64;
  cfg.minibatch_size = 32;
  cfg.hidden = {16};
  PpoSynchronizer agent(ActionSpace(4, 1), cfg, 10);
  const SyncState s = zeros(4);
  const std::vector<double> obs(4, 0.0);
  const double p0 = agent.action_probabilities(s)(2);
  for (int t = 0; t < 64 * 20; ++t) {
    const auto a = agent.act(s, true);
    agent.observe({obs, a.index, a.index == 2 ? 0.0 : -10000.0, obs});
  }
  CHECK(agent.rollout_size() == 0);
  CHECK(agent.action_probabilities(s)(2) > std::max(0.9, p0));
  CHECK(agent.act(s, false).index == 2);
}

TEST_CASE("checkpoints round trip") {
  QLearningConfig cfg;
  cfg.hidden = {8};
  D2QSynchronizer a(ActionSpace(5, 2), cfg, 11), b(ActionSpace(5, 2), cfg, 12);
  b.load_checkpoint(nlohmann::json::parse(a.checkpoint().dump()));
  CHECK(nn::max_abs_difference(a.main_network(), b.main_network()) == 0.0);
  for (int i = 0; i < 10; ++i) {
    SyncState s{{0, i, 2 * i, 3, 60}};
    CHECK(a.greedy(s).index == b.greedy(s).index);
  }
  DqSchedulerSynchronizer other(ActionSpace(5, 2), cfg, 1);
  CHECK_THROWS_AS(other.load_checkpoint(nlohmann::json::parse(a.checkpoint().dump())), ConfigError);
  D2QSynchronizer wrong_shape(ActionSpace(5, 3), cfg, 1);
  CHECK_THROWS_AS(wrong_shape.load_checkpoint(nlohmann::json::parse(a.checkpoint().dump())), ConfigError);

  PpoSynchronizer p(ActionSpace(5, 2), PpoConfig{}, 1), q(ActionSpace(5, 2), PpoConfig{}, 2);
  q.load_checkpoint(nlohmann::json::parse(p.checkpoint().dump()));
  CHECK(nn::max_abs_difference(p.actor(), q.actor()) == 0.0);
  CHECK(nn::max_abs_difference(p.critic(), q.critic()) == 0.0);
}

TEST_CASE("policy factory") {
  const ActionSpace space(7, 3);
  for (const auto& name : known_policies()) {
    if (name == "full_sync") continue;
    auto p = make_policy(name, space, 64, nullptr, 1);
    CHECK(p->name() == name);
  }
  CHECK(make_policy("dq_scheduler", space, 64, nullptr, 1)->name() == "dqn");
  CHECK(make_policy("full_sync", ActionSpace(7, 6), 64, nullptr, 1)->name() == "full_sync");
  CHECK_THROWS_AS(make_policy("nope", space, 64, nullptr, 1), ConfigError);
  CHECK_THROWS_AS(make_policy("random", space, 64, {{"x", 1}}, 1), ConfigError);
  CHECK_THROWS_AS(make_policy("d2q", space, 64, {{"gama", 0.9}}, 1), ConfigError);
  CHECK_THROWS_AS(make_policy("d2q", space, 64, {{"gamma", "high"}}, 1), ConfigError);
  CHECK_THROWS_AS(make_policy("d2q", space, 64, {{"batch_size", 0}}, 1), ConfigError);
  CHECK_THROWS_AS(make_policy("d2q", space, 64, {{"target_style", "other"}}, 1), ConfigError);
  auto literal = make_policy("d2q", space, 64, {{"target_style", "current_state_argmax"}}, 1);
  CHECK(literal->checkpoint()["config"]["target_style"] == "current_state_argmax");
}

TEST_CASE("greedy actions are a pure function of the state") {
  const ActionSpace space(6, 2);
  for (const char* name : {"d2q", "dqn", "ppo"}) {
    auto policy = make_policy(name, space, 64, nullptr, 3);
    Rng rng(4);
    for (int i = 0; i < 50; ++i) {
      SyncState s = zeros(6);
      for (int d = 1; d < 6; ++d) s.staleness[d] = uniform_int(rng, 0, 64);
      const auto a = policy->act(s, false);
      CHECK(policy->act(s, false).index == a.index);
      CHECK(policy->act(s, false).index == a.index);
    }
  }
}

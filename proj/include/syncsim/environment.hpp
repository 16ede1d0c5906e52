#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "syncsim/routing.hpp"
#include "syncsim/topology.hpp"

namespace syncsim {

// Periods elapsed since each controller's SCM was last merged. Entry 0 is
// the policy-hosting controller and stays 0.
struct SyncState {
  std::vector<int> staleness;

  int size() const { return static_cast<int>(staleness.size()); }
  bool operator==(const SyncState&) const = default;
};

struct SyncAction {
  std::vector<int> selected;  // sorted, subset of {1..N-1}
  int index = -1;             // position in ActionSpace enumeration

  bool contains(int domain) const;
};

// Number of SB-subsets of the N-1 synchronizable peers. Throws
// std::domain_error unless 1 <= sb <= n_domains - 1.
std::int64_t action_space_size(int n_domains, int sb);

// Lexicographic enumeration of the SB-subsets of {1..N-1}.
class ActionSpace {
 public:
  static constexpr std::int64_t kMaxActions = 65536;

  // Throws ConfigError when the enumeration exceeds kMaxActions.
  ActionSpace(int n_domains, int sb);

  int size() const { return static_cast<int>(subsets_.size()); }
  int n_domains() const { return n_domains_; }
  int budget() const { return sb_; }

  // index -> subset; throws std::out_of_range.
  SyncAction action(int index) const;
  // subset -> index; throws BudgetError when not a valid SB-subset.
  int index_of(std::span<const int> selected) const;

 private:
  int n_domains_;
  int sb_;
  std::vector<std::vector<int>> subsets_;
};

// staleness / max_staleness, clipped to [0, 1].
std::vector<double> normalize_state(const SyncState& s, int max_staleness);

enum class TaskSourceScope { kPolicyDomain, kAllDomains };

struct EnvConfig {
  NetworkConfig network;
  int sb = 3;
  double poisson_rate_lo = 2.0;
  double poisson_rate_hi = 5.0;
  double deadline_mix = 0.5;  // fraction of low-latency tasks
  double low_deadline_ms = 10.0;
  double mid_deadline_ms = 100.0;
  double lambda_penalty = 80.0;
  double r1 = 10000.0;
  int horizon = 500;
  int max_staleness = 64;
  TaskSourceScope task_source_scope = TaskSourceScope::kPolicyDomain;
  bool view_latency_aware = false;
  bool oracle_unconstrained = false;
  bool requeue_violations = false;
  bool regenerate_each_episode = false;

  void validate() const;
};

// What the policy-hosting controller believes: the last SCM merged from
// every domain plus the freshest gateway latencies it has seen.
class ControllerView {
 public:
  ControllerView() = default;
  explicit ControllerView(const GroundTruthNetwork& truth);

  void merge(const Scm& scm);

  const Scm& domain(int d) const { return domains_.at(d); }
  std::int64_t gateway_period(int link) const { return gateway_period_.at(link); }
  double gateway_latency(int link) const { return gateway_latency_.at(link); }

  // Graph and servers as the controller sees them. Structure (node counts,
  // gateway endpoints, server attach points) comes from `truth`.
  RoutingGraph graph(const GroundTruthNetwork& truth) const;
  std::vector<EdgeServer> servers(const GroundTruthNetwork& truth) const;

 private:
  std::vector<Scm> domains_;
  std::vector<double> gateway_latency_;
  std::vector<std::int64_t> gateway_period_;
};

struct TaskRecord {
  Task task;
  int selected_server = -1;
  int oracle_server = -1;
  double view_latency_ms = kUnreachable;
  double realized_latency_ms = kUnreachable;
  double selected_cost = 0.0;  // ground truth
  double oracle_cost = 0.0;    // ground truth
  bool valid_path = false;
  bool compliant = false;
  bool correct_server = false;
  bool feasible = false;
  double utility = 0.0;
};

struct StepOutcome {
  double reward = 0.0;
  int tasks_total = 0;
  int tasks_compliant = 0;
  int tasks_correct_server = 0;
  int tasks_infeasible = 0;
  double realized_cost_sum = 0.0;
  SyncState next_state;
  std::vector<TaskRecord> tasks;
};

// Per-task utility: 0 when compliant on the optimal server, -lambda * |cost
// gap| when compliant on another server, -r1 otherwise.
double task_utility(bool compliant, bool correct_server, double selected_cost, double oracle_cost,
                    double lambda_penalty, double r1);

class Environment {
 public:
  explicit Environment(EnvConfig cfg);

  // Draws a fresh network from `seed` and begins the first episode with the
  // configured horizon. Throws GenerationError.
  SyncState reset(std::uint64_t seed);
  // Begins another episode on the current (still evolving) network: the view
  // is fully resynchronized and staleness zeroed. horizon <= 0 uses the config.
  SyncState begin_episode(int horizon = 0);

  // Throws BudgetError on an invalid action and EpisodeStateError when the
  // environment was not reset or the horizon is exhausted.
  StepOutcome step(const SyncAction& action);

  const EnvConfig& config() const { return cfg_; }
  const ActionSpace& actions() const { return actions_; }
  const GroundTruthNetwork& truth() const { return truth_; }
  const ControllerView& view() const { return view_; }
  const SyncState& state() const { return state_; }
  int steps_taken() const { return steps_; }
  int horizon() const { return horizon_; }
  bool done() const { return steps_ >= horizon_; }
  int episode() const { return episode_; }

  // One JSON object per step is written when a sink is set.
  void set_debug_sink(std::ostream* sink) { debug_ = sink; }

 private:
  std::vector<Task> generate_tasks();
  void write_debug(const SyncAction& action, const StepOutcome& out) const;

  EnvConfig cfg_;
  ActionSpace actions_;
  GroundTruthNetwork truth_;
  ControllerView view_;
  SyncState state_;
  Rng topology_rng_;
  Rng dynamics_rng_;
  Rng task_rng_;
  Rng rate_rng_;
  std::vector<NodeRef> sources_;
  std::vector<double> rates_;
  std::vector<Task> requeued_;
  long next_task_id_ = 0;
  int steps_ = 0;
  int horizon_ = 0;
  int episode_ = 0;
  bool initialized_ = false;
  std::ostream* debug_ = nullptr;
};

}  // namespace syncsim

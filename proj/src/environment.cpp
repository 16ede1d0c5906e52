#include "syncsim/environment.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include <fmt/format.h>

#include "syncsim/errors.hpp"
#include "syncsim/serialize.hpp"

namespace syncsim {

bool SyncAction::contains(int domain) const {
  return std::binary_search(selected.begin(), selected.end(), domain);
}

std::int64_t action_space_size(int n_domains, int sb) {
  if (n_domains < 2 || sb < 1 || sb > n_domains - 1)
    throw std::domain_error(fmt::format("need 1 <= SB <= N-1, got N={} SB={}", n_domains, sb));
  const int n = n_domains - 1;
  const int k = std::min(sb, n - sb);
  std::int64_t c = 1;
  for (int i = 1; i <= k; ++i) c = c * (n - k + i) / i;
  return c;
}

ActionSpace::ActionSpace(int n_domains, int sb) : n_domains_(n_domains), sb_(sb) {
  std::int64_t count = 0;
  try {
    count = action_space_size(n_domains, sb);
  } catch (const std::domain_error& e) {
    throw ConfigError(e.what());
  }
  if (count > kMaxActions)
    throw ConfigError(fmt::format("C({}, {}) = {} exceeds the action bound {}", n_domains - 1, sb,
                                  count, kMaxActions));
  subsets_.reserve(static_cast<std::size_t>(count));
  std::vector<int> cur(sb);
  for (int i = 0; i < sb; ++i) cur[i] = i + 1;
  const int top = n_domains - 1;
  while (true) {
    subsets_.push_back(cur);
    int i = sb - 1;
    while (i >= 0 && cur[i] == top - (sb - 1 - i)) --i;
    if (i < 0) break;
    ++cur[i];
    for (int j = i + 1; j < sb; ++j) cur[j] = cur[j - 1] + 1;
  }
}

SyncAction ActionSpace::action(int index) const {
  if (index < 0 || index >= size())
    throw std::out_of_range(fmt::format("action index {} outside [0, {})", index, size()));
  return {subsets_[index], index};
}

int ActionSpace::index_of(std::span<const int> selected) const {
  if (static_cast<int>(selected.size()) != sb_)
    throw BudgetError(fmt::format("action selects {} controllers, budget is {}", selected.size(), sb_));
  std::vector<int> sorted(selected.begin(), selected.end());
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (sorted[i] < 1 || sorted[i] >= n_domains_)
      throw BudgetError(fmt::format("controller {} is not a synchronizable peer", sorted[i]));
    if (i > 0 && sorted[i] == sorted[i - 1])
      throw BudgetError(fmt::format("controller {} selected twice", sorted[i]));
  }
  auto it = std::lower_bound(subsets_.begin(), subsets_.end(), sorted);
  return static_cast<int>(it - subsets_.begin());
}

std::vector<double> normalize_state(const SyncState& s, int max_staleness) {
  std::vector<double> out(s.staleness.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::clamp(static_cast<double>(s.staleness[i]) / max_staleness, 0.0, 1.0);
  return out;
}

void EnvConfig::validate() const {
  network.validate();
  auto fail = [](const std::string& msg) { throw ConfigError("env config: " + msg); };
  if (sb < 1 || sb > network.n_domains - 1) fail("sb must satisfy 1 <= SB <= N-1");
  if (action_space_size(network.n_domains, sb) > ActionSpace::kMaxActions)
    fail("C(N-1, SB) exceeds the action bound");
  if (poisson_rate_lo < 0 || poisson_rate_lo > poisson_rate_hi) fail("bad poisson rate range");
  if (deadline_mix < 0 || deadline_mix > 1) fail("deadline_mix must be in [0, 1]");
  if (low_deadline_ms <= 0 || mid_deadline_ms <= 0) fail("deadlines must be positive");
  if (lambda_penalty < 0 || r1 < 0) fail("lambda_penalty and r1 must be non-negative");
  if (horizon < 1) fail("horizon must be >= 1");
  if (max_staleness < 1) fail("max_staleness must be >= 1");
}

ControllerView::ControllerView(const GroundTruthNetwork& truth) {
  gateway_latency_.resize(truth.gateway_links.size());
  gateway_period_.resize(truth.gateway_links.size(), truth.period);
  for (std::size_t i = 0; i < truth.gateway_links.size(); ++i)
    gateway_latency_[i] = truth.gateway_links[i].latency_ms;
  for (int d = 0; d < truth.n_domains(); ++d) domains_.push_back(make_scm(truth, d));
}

void ControllerView::merge(const Scm& scm) {
  domains_.at(scm.domain_id) = scm;
  for (const auto& g : scm.gateway_latencies) {
    if (scm.period_created < gateway_period_.at(g.link_index)) continue;
    gateway_latency_[g.link_index] = g.latency_ms;
    gateway_period_[g.link_index] = scm.period_created;
  }
}

RoutingGraph ControllerView::graph(const GroundTruthNetwork& truth) const {
  RoutingGraph g(truth.domain_sizes());
  for (int d = 0; d < static_cast<int>(domains_.size()); ++d)
    for (const auto& l : domains_[d].topology)
      if (!l.failed) g.add_link({d, l.u}, {d, l.v}, l.latency_ms);
  for (std::size_t i = 0; i < truth.gateway_links.size(); ++i) {
    const auto& gl = truth.gateway_links[i];
    g.add_link({gl.domain_a, gl.node_a}, {gl.domain_b, gl.node_b}, gateway_latency_[i]);
  }
  return g;
}

std::vector<EdgeServer> ControllerView::servers(const GroundTruthNetwork& truth) const {
  std::vector<EdgeServer> out = truth.all_servers();
  for (const auto& scm : domains_)
    for (const auto& sc : scm.server_costs) out[sc.server_id].cost = sc.cost;
  return out;
}

double task_utility(bool compliant, bool correct_server, double selected_cost, double oracle_cost,
                    double lambda_penalty, double r1) {
  if (!compliant) return -r1;
  if (correct_server) return 0.0;
  return -lambda_penalty * std::abs(selected_cost - oracle_cost);
}

Environment::Environment(EnvConfig cfg)
    : cfg_((cfg.validate(), std::move(cfg))), actions_(cfg_.network.n_domains, cfg_.sb) {}

SyncState Environment::reset(std::uint64_t seed) {
  topology_rng_ = make_rng(seed, Stream::kTopology);
  dynamics_rng_ = make_rng(seed, Stream::kDynamics);
  task_rng_ = make_rng(seed, Stream::kTasks);
  rate_rng_ = make_rng(seed, Stream::kTaskRates);
  NetworkConfig net_cfg = cfg_.network;
  net_cfg.seed = seed;
  truth_ = generate_network(net_cfg, topology_rng_);
  sources_.clear();
  for (int d = 0; d < truth_.n_domains(); ++d) {
    if (d > 0 && cfg_.task_source_scope == TaskSourceScope::kPolicyDomain) break;
    for (int n = 0; n < truth_.domains[d].num_nodes; ++n) sources_.push_back({d, n});
  }
  next_task_id_ = 0;
  episode_ = 0;
  initialized_ = true;
  return begin_episode(cfg_.horizon);
}

SyncState Environment::begin_episode(int horizon) {
  if (!initialized_) throw EpisodeStateError("begin_episode() before reset()");
  if (cfg_.regenerate_each_episode && episode_ > 0) {
    NetworkConfig net_cfg = truth_.config;
    truth_ = generate_network(net_cfg, topology_rng_);
  }
  ++episode_;
  view_ = ControllerView(truth_);
  state_.staleness.assign(cfg_.network.n_domains, 0);
  rates_.resize(sources_.size());
  for (auto& r : rates_) r = uniform_real(rate_rng_, cfg_.poisson_rate_lo, cfg_.poisson_rate_hi);
  requeued_.clear();
  steps_ = 0;
  horizon_ = horizon > 0 ? horizon : cfg_.horizon;
  return state_;
}

std::vector<Task> Environment::generate_tasks() {
  std::vector<Task> tasks = std::move(requeued_);
  requeued_.clear();
  for (std::size_t i = 0; i < sources_.size(); ++i) {
    const int count = rates_[i] > 0 ? std::poisson_distribution<int>(rates_[i])(task_rng_) : 0;
    for (int k = 0; k < count; ++k) {
      Task t;
      t.task_id = next_task_id_++;
      t.source = sources_[i];
      t.deadline_ms = bernoulli(task_rng_, cfg_.deadline_mix) ? cfg_.low_deadline_ms
                                                                : cfg_.mid_deadline_ms;
      t.period_created = truth_.period;
      tasks.push_back(t);
    }
  }
  return tasks;
}

StepOutcome Environment::step(const SyncAction& action) {
  if (!initialized_) throw EpisodeStateError("step() before reset()");
  if (done()) throw EpisodeStateError("episode horizon exhausted; call begin_episode()");
  const int index = actions_.index_of(action.selected);
  if (action.index >= 0 && action.index != index)
    throw BudgetError(fmt::format("action index {} does not match its subset (index {})",
                                  action.index, index));
  const SyncAction applied = actions_.action(index);

  advance_period(truth_, dynamics_rng_);
  view_.merge(make_scm(truth_, 0));
  for (int d : applied.selected) view_.merge(make_scm(truth_, d));
  for (int d = 1; d < state_.size(); ++d) {
    state_.staleness[d] =
        applied.contains(d) ? 0 : std::min(state_.staleness[d] + 1, cfg_.max_staleness);
  }

  const std::vector<Task> tasks = generate_tasks();
  const RoutingGraph view_graph = view_.graph(truth_);
  const std::vector<EdgeServer> view_servers = view_.servers(truth_);
  const RoutingGraph truth_graph = build_graph(truth_);
  const std::vector<EdgeServer> truth_servers = truth_.all_servers();
  const double hop_wait = truth_.config.hop_wait_ms;
  PathCache view_paths(view_graph, hop_wait);
  PathCache truth_paths(truth_graph, hop_wait);

  StepOutcome out;
  out.tasks.reserve(tasks.size());
  for (const Task& task : tasks) {
    const Allocation alloc =
        select_server(view_paths.from(task.source), view_servers, task, cfg_.view_latency_aware);
    const OracleChoice oracle = oracle_best_server(truth_paths.from(task.source), truth_servers,
                                                   task, cfg_.oracle_unconstrained);
    const Realization real = realize(truth_graph, truth_servers, alloc, hop_wait);

    TaskRecord rec;
    rec.task = task;
    rec.selected_server = alloc.server_id;
    rec.oracle_server = oracle.server_id;
    rec.view_latency_ms = alloc.path.latency_ms;
    rec.realized_latency_ms = real.latency_ms;
    rec.selected_cost = real.cost;
    rec.oracle_cost = oracle.cost;
    rec.valid_path = real.valid;
    rec.compliant = real.valid && real.latency_ms < task.deadline_ms;
    rec.correct_server = rec.compliant && alloc.server_id == oracle.server_id;
    rec.feasible = oracle.latency_feasible;
    rec.utility = task_utility(rec.compliant, rec.correct_server, rec.selected_cost,
                               rec.oracle_cost, cfg_.lambda_penalty, cfg_.r1);

    out.reward += rec.utility;
    ++out.tasks_total;
    out.tasks_compliant += rec.compliant;
    out.tasks_correct_server += rec.correct_server;
    out.tasks_infeasible += !rec.feasible;
    if (rec.compliant) out.realized_cost_sum += rec.selected_cost;
    if (!rec.compliant && cfg_.requeue_violations && task.attempts == 0) {
      Task retry = task;
      retry.attempts = 1;
      requeued_.push_back(retry);
    }
    out.tasks.push_back(std::move(rec));
  }
  ++steps_;
  out.next_state = state_;
  if (debug_) write_debug(applied, out);
  return out;
}

void Environment::write_debug(const SyncAction& action, const StepOutcome& out) const {
  *debug_ << step_to_json(truth_.period, action, out).dump() << '\n';
}

}  // namespace syncsim

#include "syncsim/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "syncsim/errors.hpp"

namespace syncsim {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

std::string format_metrics_row(const MetricsRow& r) {
  return fmt::format("{},{},{},{},{},{},{},{},{},{}", r.policy, r.seed, r.phase, r.episode,
                     r.accumulated_cost, r.latency_compliant_count, r.correct_allocation_count,
                     r.task_count, r.infeasible_count, r.mean_reward);
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows) {
  out << kMetricsHeader << '\n';
  for (const auto& r : rows) out << format_metrics_row(r) << '\n';
}

std::vector<MetricsRow> read_metrics_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader)
    throw ConfigError("metrics.csv header does not match " + std::string(kMetricsSchema));
  std::vector<MetricsRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 10) throw ConfigError(fmt::format("metrics.csv line {}: expected 10 fields", line_no));
    try {
      MetricsRow r;
      r.policy = f[0];
      r.seed = std::stoull(f[1]);
      r.phase = f[2];
      r.episode = std::stoi(f[3]);
      r.accumulated_cost = std::stod(f[4]);
      r.latency_compliant_count = std::stol(f[5]);
      r.correct_allocation_count = std::stol(f[6]);
      r.task_count = std::stol(f[7]);
      r.infeasible_count = std::stol(f[8]);
      r.mean_reward = std::stod(f[9]);
      rows.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw ConfigError(fmt::format("metrics.csv line {}: malformed number", line_no));
    }
  }
  return rows;
}

MetricsRow run_episode(Environment& env, SynchronizerPolicy& policy, int horizon, bool explore,
                       bool learn, std::ostream* debug) {
  SyncState state = env.begin_episode(horizon);
  const int max_staleness = env.config().max_staleness;
  env.set_debug_sink(debug);
  MetricsRow row;
  row.policy = policy.name();
  double reward_sum = 0.0;
  while (!env.done()) {
    const SyncAction action = policy.act(state, explore);
    StepOutcome out = env.step(action);
    reward_sum += out.reward;
    row.latency_compliant_count += out.tasks_compliant;
    row.correct_allocation_count += out.tasks_correct_server;
    row.task_count += out.tasks_total;
    row.infeasible_count += out.tasks_infeasible;
    if (learn) {
      policy.observe({normalize_state(state, max_staleness), action.index, out.reward,
                      normalize_state(out.next_state, max_staleness)});
    }
    state = std::move(out.next_state);
  }
  env.set_debug_sink(nullptr);
  row.accumulated_cost = -reward_sum;
  row.mean_reward = reward_sum / env.steps_taken();
  return row;
}

namespace {

void evaluate_into(CellResult& cell, const ExperimentSpec& spec, Environment& env,
                   SynchronizerPolicy& policy) {
  std::ostringstream debug;
  for (int k = 1; k <= spec.eval_episodes; ++k) {
    MetricsRow row = run_episode(env, policy, spec.eval_horizon, /*explore=*/false, /*learn=*/false,
                                 spec.debug_dump ? &debug : nullptr);
    row.seed = cell.seed;
    row.phase = "eval";
    row.episode = k;
    cell.rows.push_back(std::move(row));
  }
  cell.debug_jsonl = debug.str();
}

}  // namespace

CellResult run_cell(const ExperimentSpec& spec, const PolicySpec& ps, std::uint64_t seed) {
  CellResult cell;
  cell.policy = ps.name;
  cell.seed = seed;
  try {
    Environment env(spec.env);
    env.reset(seed);
    auto policy = make_policy(ps.name, env.actions(), spec.env.max_staleness, ps.config, seed);
    cell.policy = policy->name();
    for (int e = 1; e <= spec.episodes; ++e) {
      MetricsRow row = run_episode(env, *policy, spec.env.horizon, /*explore=*/true,
                                   /*learn=*/policy->learns());
      row.seed = seed;
      row.phase = "train";
      row.episode = e;
      cell.rows.push_back(std::move(row));
      policy->end_episode(e);
    }
    evaluate_into(cell, spec, env, *policy);
    cell.checkpoint = policy->checkpoint();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    cell.failed = true;
    cell.error = e.what();
  }
  return cell;
}

CellResult evaluate_cell(const ExperimentSpec& spec, SynchronizerPolicy& policy, std::uint64_t seed) {
  CellResult cell;
  cell.policy = policy.name();
  cell.seed = seed;
  try {
    Environment env(spec.env);
    env.reset(seed);
    if (env.actions().n_domains() != policy.actions().n_domains() ||
        env.actions().budget() != policy.actions().budget())
      throw ConfigError("policy was built for a different (N, SB) than the environment");
    evaluate_into(cell, spec, env, policy);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    cell.failed = true;
    cell.error = e.what();
  }
  return cell;
}

std::vector<MetricsRow> ExperimentResult::rows() const {
  std::vector<MetricsRow> out;
  for (const auto& c : cells) out.insert(out.end(), c.rows.begin(), c.rows.end());
  return out;
}

ExperimentResult run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  std::vector<std::pair<const PolicySpec*, std::uint64_t>> jobs;
  for (const auto& p : spec.policies)
    for (auto seed : spec.seeds) jobs.emplace_back(&p, seed);
  ExperimentResult result;
  result.cells.resize(jobs.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr config_error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        result.cells[i] = run_cell(spec, *jobs[i].first, jobs[i].second);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!config_error) config_error = std::current_exception();
      }
    }
  };
  const int threads = std::min<int>(spec.threads, static_cast<int>(jobs.size()));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (config_error) std::rethrow_exception(config_error);
  return result;
}

Stat describe(const std::vector<double>& values) {
  Stat s;
  s.n = static_cast<long>(values.size());
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / s.n;
  if (s.n > 1) {
    double sq = 0.0;
    for (double v : values) sq += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(sq / (s.n - 1));
  }
  return s;
}

namespace {

ordered_json stat_json(const Stat& s) { return {{"mean", s.mean}, {"std", s.std}, {"n", s.n}}; }

struct EvalColumns {
  std::vector<double> cost, compliant, correct, tasks, infeasible, reward;

  void add(const MetricsRow& r) {
    cost.push_back(r.accumulated_cost);
    compliant.push_back(static_cast<double>(r.latency_compliant_count));
    correct.push_back(static_cast<double>(r.correct_allocation_count));
    tasks.push_back(static_cast<double>(r.task_count));
    infeasible.push_back(static_cast<double>(r.infeasible_count));
    reward.push_back(r.mean_reward);
  }
};

// Evaluation rows grouped per policy, in first-appearance order.
std::vector<std::pair<std::string, EvalColumns>> eval_by_policy(const std::vector<MetricsRow>& rows) {
  std::vector<std::pair<std::string, EvalColumns>> out;
  for (const auto& r : rows) {
    if (r.phase != "eval") continue;
    auto it = std::find_if(out.begin(), out.end(), [&](const auto& p) { return p.first == r.policy; });
    if (it == out.end()) {
      out.emplace_back(r.policy, EvalColumns{});
      it = out.end() - 1;
    }
    it->second.add(r);
  }
  return out;
}

double pct(double numerator, double base) {
  if (base == 0.0) return numerator == 0.0 ? 0.0 : std::nan("");
  return 100.0 * numerator / base;
}

ordered_json pct_json(double v) { return std::isnan(v) ? ordered_json(nullptr) : ordered_json(v); }

}  // namespace

ordered_json summarize(const ExperimentSpec& spec, const ExperimentResult& result) {
  ordered_json doc;
  doc["schema"] = "syncsim.summary.v1";
  doc["metrics_schema"] = kMetricsSchema;
  doc["env"] = env_config_to_json(spec.env);
  doc["experiment"] = {{"episodes", spec.episodes},
                       {"train_horizon", spec.env.horizon},
                       {"eval_episodes", spec.eval_episodes},
                       {"eval_horizon", spec.eval_horizon},
                       {"seeds", spec.seeds}};
  ordered_json policies = ordered_json::array();
  const auto grouped = eval_by_policy(result.rows());
  for (const auto& ps : spec.policies) {
    ordered_json p;
    p["policy"] = ps.name;
    p["config"] = ps.config.is_null() ? ordered_json::object() : ordered_json(ps.config);
    std::string name = ps.name == "dq_scheduler" ? "dqn" : ps.name;
    auto it = std::find_if(grouped.begin(), grouped.end(), [&](const auto& g) { return g.first == name; });
    if (it != grouped.end()) {
      const auto& c = it->second;
      p["accumulated_cost"] = stat_json(describe(c.cost));
      p["latency_compliant_count"] = stat_json(describe(c.compliant));
      p["correct_allocation_count"] = stat_json(describe(c.correct));
      p["task_count"] = stat_json(describe(c.tasks));
      p["infeasible_count"] = stat_json(describe(c.infeasible));
      p["mean_reward"] = stat_json(describe(c.reward));
    }
    ordered_json per_seed = ordered_json::array();
    for (const auto& cell : result.cells) {
      if (cell.policy != name) continue;
      std::vector<double> costs;
      for (const auto& r : cell.rows)
        if (r.phase == "eval") costs.push_back(r.accumulated_cost);
      per_seed.push_back({{"seed", cell.seed},
                          {"failed", cell.failed},
                          {"accumulated_cost", stat_json(describe(costs))}});
    }
    p["per_seed"] = per_seed;
    policies.push_back(p);
  }
  doc["policies"] = policies;
  ordered_json failures = ordered_json::array();
  for (const auto& cell : result.cells)
    if (cell.failed) failures.push_back({{"policy", cell.policy}, {"seed", cell.seed}, {"error", cell.error}});
  doc["failures"] = failures;
  return doc;
}

void write_experiment(const ExperimentSpec& spec, const ExperimentResult& result, const fs::path& dir) {
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "metrics.csv", std::ios::binary);
    write_metrics_csv(out, result.rows());
  }
  {
    std::ofstream out(dir / "summary.json", std::ios::binary);
    out << summarize(spec, result).dump(2) << '\n';
  }
  for (const auto& cell : result.cells) {
    const std::string stem = fmt::format("{}_seed{}", cell.policy, cell.seed);
    if (spec.save_checkpoints && !cell.failed && !cell.checkpoint.is_null()) {
      fs::create_directories(dir / "checkpoints");
      std::ofstream out(dir / "checkpoints" / (stem + ".json"), std::ios::binary);
      out << cell.checkpoint.dump() << '\n';
    }
    if (spec.debug_dump) {
      std::ofstream out(dir / ("debug_" + stem + ".jsonl"), std::ios::binary);
      out << cell.debug_jsonl;
    }
  }
}

ordered_json compare(const std::vector<MetricsRow>& rows, const std::string& reference) {
  const auto grouped = eval_by_policy(rows);
  if (grouped.size() < 2) throw MissingPolicyError("compare needs at least two evaluated policies");
  auto ref = std::find_if(grouped.begin(), grouped.end(), [&](const auto& g) { return g.first == reference; });
  if (ref == grouped.end()) throw MissingPolicyError("reference policy '" + reference + "' has no evaluation rows");

  ordered_json doc;
  doc["schema"] = "syncsim.report.v1";
  doc["reference"] = reference;
  ordered_json means = ordered_json::object();
  for (const auto& [name, c] : grouped) {
    means[name] = {{"accumulated_cost", describe(c.cost).mean},
                   {"latency_compliant_count", describe(c.compliant).mean},
                   {"correct_allocation_count", describe(c.correct).mean},
                   {"eval_episodes", c.cost.size()}};
  }
  doc["policies"] = means;
  const double ref_cost = describe(ref->second.cost).mean;
  const double ref_compliant = describe(ref->second.compliant).mean;
  const double ref_correct = describe(ref->second.correct).mean;
  ordered_json improvements = ordered_json::array();
  for (const auto& [name, c] : grouped) {
    if (name == reference) continue;
    const double cost = describe(c.cost).mean;
    const double compliant = describe(c.compliant).mean;
    const double correct = describe(c.correct).mean;
    improvements.push_back({{"baseline", name},
                            {"cost_reduction_pct", pct_json(pct(cost - ref_cost, cost))},
                            {"compliant_paths_gain_pct", pct_json(pct(ref_compliant - compliant, compliant))},
                            {"correct_allocations_gain_pct", pct_json(pct(ref_correct - correct, correct))}});
  }
  doc["improvements"] = improvements;
  return doc;
}

ordered_json compare_dir(const fs::path& dir, const std::string& reference) {
  std::ifstream in(dir / "metrics.csv");
  if (!in) throw ConfigError("no metrics.csv in " + dir.string());
  return compare(read_metrics_csv(in), reference);
}

SweepPlan plan_sweep(const SweepSpec& sweep, const ExperimentSpec& base) {
  SweepPlan plan;
  for (int n : sweep.n_domains) {
    for (int sb : sweep.sb) {
      for (double mix : sweep.deadline_mix) {
        SweepCell cell{n, sb, mix};
        try {
          cell_spec(base, cell).validate();
          plan.cells.push_back(cell);
        } catch (const ConfigError& e) {
          plan.rejected.emplace_back(cell, e.what());
        }
      }
    }
  }
  return plan;
}

ExperimentSpec cell_spec(const ExperimentSpec& base, const SweepCell& cell) {
  ExperimentSpec spec = base;
  spec.env.network.n_domains = cell.n_domains;
  spec.env.sb = cell.sb;
  spec.env.deadline_mix = cell.deadline_mix;
  if (!spec.env.network.domain_activity.empty() &&
      static_cast<int>(spec.env.network.domain_activity.size()) != cell.n_domains) {
    // Per-domain activity is resized by repeating the last entry.
    auto& act = spec.env.network.domain_activity;
    act.resize(cell.n_domains, act.back());
  }
  return spec;
}

std::vector<std::string> run_sweep(const ConfigDocument& doc, const fs::path& dir) {
  if (!doc.sweep) throw ConfigError("config has no sweep section");
  const ExperimentSpec& base = doc.experiment;
  const SweepPlan plan = plan_sweep(*doc.sweep, base);
  fs::create_directories(dir);
  std::vector<std::string> lines;
  for (const auto& [cell, why] : plan.rejected) {
    lines.push_back(fmt::format("{},{},{},,rejected,0,,,,,,,0", cell.n_domains, cell.sb, cell.deadline_mix));
  }
  for (const auto& cell : plan.cells) {
    ExperimentSpec spec = cell_spec(base, cell);
    const fs::path cell_dir = dir / fmt::format("cell_N{}_SB{}_mix{}", cell.n_domains, cell.sb, cell.deadline_mix);
    spec.output_dir = cell_dir.string();
    const ExperimentResult result = run_experiment(spec);
    write_experiment(spec, result, cell_dir);
    const auto grouped = eval_by_policy(result.rows());
    for (const auto& ps : spec.policies) {
      const std::string name = ps.name == "dq_scheduler" ? "dqn" : ps.name;
      int failed = 0;
      for (const auto& c : result.cells) failed += c.policy == name && c.failed;
      auto it = std::find_if(grouped.begin(), grouped.end(), [&](const auto& g) { return g.first == name; });
      if (it == grouped.end()) {
        lines.push_back(fmt::format("{},{},{},{},failed,0,,,,,,,{}", cell.n_domains, cell.sb,
                                    cell.deadline_mix, name, failed));
        continue;
      }
      const auto& c = it->second;
      const Stat cost = describe(c.cost);
      lines.push_back(fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{}", cell.n_domains, cell.sb,
                                  cell.deadline_mix, name, failed ? "partial" : "ok", cost.n, cost.mean,
                                  cost.std, describe(c.compliant).mean, describe(c.correct).mean,
                                  describe(c.tasks).mean, describe(c.infeasible).mean, failed));
    }
    std::ofstream report(cell_dir / "report.json", std::ios::binary);
    try {
      report << compare(result.rows(), "d2q").dump(2) << '\n';
    } catch (const MissingPolicyError& e) {
      report << ordered_json{{"schema", "syncsim.report.v1"}, {"error", e.what()}}.dump(2) << '\n';
    }
  }
  std::ofstream out(dir / "sweep.csv", std::ios::binary);
  out << kSweepHeader << '\n';
  for (const auto& l : lines) out << l << '\n';
  return lines;
}

}  // namespace syncsim

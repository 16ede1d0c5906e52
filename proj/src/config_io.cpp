#include <algorithm>
#include <fstream>
#include <set>

#include <fmt/format.h>

#include "json_fields.hpp"
#include "syncsim/harness.hpp"

namespace syncsim {

namespace {

using detail::FieldReader;

template <class T>
void read_range(FieldReader& r, const std::string& key, T& lo, T& hi) {
  std::vector<T> pair;
  if (!r.has(key)) return;
  r.get(key, pair);
  if (pair.size() != 2) throw ConfigError(key + ": expected a [lo, hi] pair");
  lo = pair[0];
  hi = pair[1];
}

}  // namespace

NetworkConfig network_config_from_json(const nlohmann::json& doc) {
  NetworkConfig c;
  FieldReader r(doc, "network");
  read_range(r, "devices_per_domain", c.devices_min, c.devices_max);
  read_range(r, "cost_range", c.cost_min, c.cost_max);
  read_range(r, "intra_latency_range", c.intra_latency_lo, c.intra_latency_hi);
  read_range(r, "inter_latency_range", c.inter_latency_lo, c.inter_latency_hi);
  r.get("n_domains", c.n_domains)
      .get("servers_per_domain", c.servers_per_domain)
      .get("intra_edge_prob", c.intra_edge_prob)
      .get("inter_gateway_degree", c.inter_gateway_degree)
      .get("link_failure_prob", c.link_failure_prob)
      .get("hop_wait_ms", c.hop_wait_ms)
      .get("cost_persistence_prob", c.cost_persistence_prob)
      .get("domain_activity", c.domain_activity)
      .get("seed", c.seed)
      .finish();
  c.validate();
  return c;
}

nlohmann::ordered_json network_config_to_json(const NetworkConfig& c) {
  return {{"n_domains", c.n_domains},
          {"devices_per_domain", {c.devices_min, c.devices_max}},
          {"servers_per_domain", c.servers_per_domain},
          {"intra_edge_prob", c.intra_edge_prob},
          {"inter_gateway_degree", c.inter_gateway_degree},
          {"link_failure_prob", c.link_failure_prob},
          {"cost_range", {c.cost_min, c.cost_max}},
          {"intra_latency_range", {c.intra_latency_lo, c.intra_latency_hi}},
          {"inter_latency_range", {c.inter_latency_lo, c.inter_latency_hi}},
          {"hop_wait_ms", c.hop_wait_ms},
          {"cost_persistence_prob", c.cost_persistence_prob},
          {"domain_activity", c.domain_activity},
          {"seed", c.seed}};
}

EnvConfig env_config_from_json(const nlohmann::json& doc) {
  EnvConfig c;
  FieldReader r(doc, "env");
  if (r.has("network")) c.network = network_config_from_json(r.at("network"));
  read_range(r, "poisson_rate_range", c.poisson_rate_lo, c.poisson_rate_hi);
  std::string scope = "policy_domain";
  r.get("sb", c.sb)
      .get("deadline_mix", c.deadline_mix)
      .get("low_deadline_ms", c.low_deadline_ms)
      .get("mid_deadline_ms", c.mid_deadline_ms)
      .get("lambda_penalty", c.lambda_penalty)
      .get("r1", c.r1)
      .get("horizon", c.horizon)
      .get("max_staleness", c.max_staleness)
      .get("task_source_scope", scope)
      .get("view_latency_aware", c.view_latency_aware)
      .get("oracle_unconstrained", c.oracle_unconstrained)
      .get("requeue_violations", c.requeue_violations)
      .get("regenerate_each_episode", c.regenerate_each_episode)
      .finish();
  if (scope == "policy_domain") {
    c.task_source_scope = TaskSourceScope::kPolicyDomain;
  } else if (scope == "all_domains") {
    c.task_source_scope = TaskSourceScope::kAllDomains;
  } else {
    throw ConfigError("env.task_source_scope must be policy_domain or all_domains");
  }
  c.validate();
  return c;
}

nlohmann::ordered_json env_config_to_json(const EnvConfig& c) {
  return {{"network", network_config_to_json(c.network)},
          {"sb", c.sb},
          {"poisson_rate_range", {c.poisson_rate_lo, c.poisson_rate_hi}},
          {"deadline_mix", c.deadline_mix},
          {"low_deadline_ms", c.low_deadline_ms},
          {"mid_deadline_ms", c.mid_deadline_ms},
          {"lambda_penalty", c.lambda_penalty},
          {"r1", c.r1},
          {"horizon", c.horizon},
          {"max_staleness", c.max_staleness},
          {"task_source_scope",
           c.task_source_scope == TaskSourceScope::kPolicyDomain ? "policy_domain" : "all_domains"},
          {"view_latency_aware", c.view_latency_aware},
          {"oracle_unconstrained", c.oracle_unconstrained},
          {"requeue_violations", c.requeue_violations},
          {"regenerate_each_episode", c.regenerate_each_episode}};
}

void ExperimentSpec::validate() const {
  env.validate();
  if (policies.empty()) throw ConfigError("experiment needs at least one policy");
  const auto names = known_policies();
  std::set<std::string> seen;
  for (const auto& p : policies) {
    if (p.name != "dq_scheduler" && std::find(names.begin(), names.end(), p.name) == names.end())
      throw ConfigError("unknown policy '" + p.name + "'");
    if (!seen.insert(p.name).second) throw ConfigError("policy '" + p.name + "' listed twice");
  }
  if (seeds.empty()) throw ConfigError("experiment needs at least one seed");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
    throw ConfigError("experiment seeds must be distinct");
  if (episodes < 0 || eval_episodes < 0) throw ConfigError("episode counts must be non-negative");
  if (eval_horizon < 1) throw ConfigError("eval_horizon must be >= 1");
  if (threads < 1) throw ConfigError("threads must be >= 1");
}

ConfigDocument parse_config(const nlohmann::json& doc) {
  ConfigDocument out;
  ExperimentSpec& spec = out.experiment;
  FieldReader top(doc, "config");
  if (top.has("env")) spec.env = env_config_from_json(top.at("env"));
  if (top.has("policies")) {
    const auto& list = top.at("policies");
    if (!list.is_array()) throw ConfigError("policies must be an array");
    for (const auto& p : list) {
      if (p.is_string()) {
        spec.policies.push_back({p.get<std::string>(), nullptr});
        continue;
      }
      PolicySpec ps;
      FieldReader(p, "policy").get("name", ps.name).get("config", ps.config).finish();
      if (ps.name.empty()) throw ConfigError("policy entry needs a name");
      spec.policies.push_back(std::move(ps));
    }
  }
  if (top.has("experiment")) {
    FieldReader(top.at("experiment"), "experiment")
        .get("episodes", spec.episodes)
        .get("eval_episodes", spec.eval_episodes)
        .get("eval_horizon", spec.eval_horizon)
        .get("seeds", spec.seeds)
        .get("output_dir", spec.output_dir)
        .get("threads", spec.threads)
        .get("debug_dump", spec.debug_dump)
        .get("save_checkpoints", spec.save_checkpoints)
        .finish();
  }
  if (top.has("sweep")) {
    SweepSpec sw;
    sw.n_domains = {spec.env.network.n_domains};
    sw.sb = {spec.env.sb};
    sw.deadline_mix = {spec.env.deadline_mix};
    FieldReader(top.at("sweep"), "sweep")
        .get("n_domains", sw.n_domains)
        .get("sb", sw.sb)
        .get("deadline_mix", sw.deadline_mix)
        .finish();
    if (sw.n_domains.empty() || sw.sb.empty() || sw.deadline_mix.empty())
      throw ConfigError("sweep axes must be non-empty");
    out.sweep = sw;
  }
  top.finish();
  // Validate each policy's own config eagerly so errors surface before any run.
  spec.validate();
  ActionSpace probe(spec.env.network.n_domains, spec.env.sb);
  for (const auto& p : spec.policies) {
    if (p.name == "full_sync" && spec.env.sb != spec.env.network.n_domains - 1) continue;
    make_policy(p.name, probe, spec.env.max_staleness, p.config, 0);
  }
  return out;
}

ConfigDocument load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return parse_config(doc);
}

}  // namespace syncsim

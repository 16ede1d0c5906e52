#include "syncsim/serialize.hpp"

#include <cmath>

namespace syncsim {

namespace {

ordered_json node_json(NodeRef n) { return ordered_json::array({n.domain, n.node}); }

ordered_json link_json(const Link& l) {
  return {{"u", l.u},
          {"v", l.v},
          {"base_latency_ms", l.base_latency_ms},
          {"latency_ms", l.latency_ms},
          {"failed", l.failed}};
}

}  // namespace

ordered_json latency_json(double ms) {
  return std::isfinite(ms) ? ordered_json(ms) : ordered_json(nullptr);
}

ordered_json network_to_json(const GroundTruthNetwork& net) {
  ordered_json doc;
  doc["schema"] = "syncsim.network.v1";
  doc["period"] = net.period;
  doc["hop_wait_ms"] = net.config.hop_wait_ms;
  ordered_json domains = ordered_json::array();
  for (std::size_t d = 0; d < net.domains.size(); ++d) {
    const Domain& dom = net.domains[d];
    ordered_json gateways = ordered_json::array();
    for (int n = 0; n < dom.num_nodes; ++n)
      if (dom.is_gateway[n]) gateways.push_back(n);
    ordered_json links = ordered_json::array();
    for (const auto& l : dom.links) links.push_back(link_json(l));
    ordered_json servers = ordered_json::array();
    for (const auto& s : dom.servers)
      servers.push_back({{"id", s.id}, {"attach_node", s.attach.node}, {"cost", s.cost}});
    domains.push_back({{"id", d},
                       {"num_nodes", dom.num_nodes},
                       {"gateways", gateways},
                       {"links", links},
                       {"servers", servers}});
  }
  doc["domains"] = domains;
  ordered_json gws = ordered_json::array();
  for (const auto& g : net.gateway_links) {
    gws.push_back({{"a", node_json({g.domain_a, g.node_a})},
                   {"b", node_json({g.domain_b, g.node_b})},
                   {"base_latency_ms", g.base_latency_ms},
                   {"latency_ms", g.latency_ms}});
  }
  doc["gateway_links"] = gws;
  return doc;
}

ordered_json scm_to_json(const Scm& scm) {
  ordered_json doc;
  doc["schema"] = "syncsim.scm.v1";
  doc["domain_id"] = scm.domain_id;
  doc["period_created"] = scm.period_created;
  ordered_json links = ordered_json::array();
  for (const auto& l : scm.topology) links.push_back(link_json(l));
  doc["topology"] = links;
  ordered_json gws = ordered_json::array();
  for (const auto& g : scm.gateway_latencies)
    gws.push_back({{"link", g.link_index}, {"latency_ms", g.latency_ms}});
  doc["gateway_latencies"] = gws;
  ordered_json costs = ordered_json::array();
  for (const auto& c : scm.server_costs) costs.push_back({{"server_id", c.server_id}, {"cost", c.cost}});
  doc["server_costs"] = costs;
  return doc;
}

ordered_json task_record_to_json(const TaskRecord& rec) {
  return {{"task_id", rec.task.task_id},
          {"source", node_json(rec.task.source)},
          {"deadline_ms", rec.task.deadline_ms},
          {"attempt", rec.task.attempts},
          {"selected_server", rec.selected_server},
          {"oracle_server", rec.oracle_server},
          {"view_latency_ms", latency_json(rec.view_latency_ms)},
          {"realized_latency_ms", latency_json(rec.realized_latency_ms)},
          {"selected_cost", rec.selected_cost},
          {"oracle_cost", rec.oracle_cost},
          {"valid_path", rec.valid_path},
          {"compliant", rec.compliant},
          {"correct_server", rec.correct_server},
          {"feasible", rec.feasible},
          {"utility", rec.utility}};
}

ordered_json step_to_json(std::int64_t period, const SyncAction& action, const StepOutcome& out) {
  ordered_json tasks = ordered_json::array();
  for (const auto& t : out.tasks) tasks.push_back(task_record_to_json(t));
  return {{"period", period},
          {"action", action.selected},
          {"reward", out.reward},
          {"staleness", out.next_state.staleness},
          {"tasks", tasks}};
}

}  // namespace syncsim

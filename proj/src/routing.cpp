#include "syncsim/routing.hpp"

#include <algorithm>
#include <queue>
#include <tuple>
#include <utility>

#include <fmt/format.h>

#include "syncsim/errors.hpp"

namespace syncsim {

RoutingGraph::RoutingGraph(std::vector<int> domain_sizes) : offsets_(domain_sizes.size() + 1, 0) {
  for (std::size_t d = 0; d < domain_sizes.size(); ++d)
    offsets_[d + 1] = offsets_[d] + domain_sizes[d];
  adjacency_.resize(offsets_.back());
}

bool RoutingGraph::contains(NodeRef n) const {
  return n.domain >= 0 && n.domain + 1 < static_cast<int>(offsets_.size()) && n.node >= 0 &&
         offsets_[n.domain] + n.node < offsets_[n.domain + 1];
}

int RoutingGraph::index(NodeRef n) const {
  if (!contains(n))
    throw NodeNotFoundError(fmt::format("node ({}, {}) is not in the graph", n.domain, n.node));
  return offsets_[n.domain] + n.node;
}

NodeRef RoutingGraph::node(int index) const {
  auto it = std::upper_bound(offsets_.begin(), offsets_.end(), index);
  const int domain = static_cast<int>(it - offsets_.begin()) - 1;
  return {domain, index - offsets_[domain]};
}

void RoutingGraph::add_link(NodeRef a, NodeRef b, double latency_ms) {
  const int ia = index(a);
  const int ib = index(b);
  if (ia == ib) return;
  auto upsert = [&](int from, int to) {
    for (auto& e : adjacency_[from]) {
      if (e.to == to) {
        e.latency_ms = std::min(e.latency_ms, latency_ms);
        return;
      }
    }
    adjacency_[from].push_back({to, latency_ms});
  };
  upsert(ia, ib);
  upsert(ib, ia);
}

std::optional<double> RoutingGraph::link_latency(NodeRef a, NodeRef b) const {
  if (!contains(a) || !contains(b)) return std::nullopt;
  const int ib = index(b);
  for (const auto& e : adjacency_[index(a)])
    if (e.to == ib) return e.latency_ms;
  return std::nullopt;
}

RoutingGraph build_graph(const GroundTruthNetwork& net) {
  RoutingGraph g(net.domain_sizes());
  for (int d = 0; d < net.n_domains(); ++d)
    for (const auto& l : net.domains[d].links)
      if (!l.failed) g.add_link({d, l.u}, {d, l.v}, l.latency_ms);
  for (const auto& gl : net.gateway_links)
    g.add_link({gl.domain_a, gl.node_a}, {gl.domain_b, gl.node_b}, gl.latency_ms);
  return g;
}

int PathResult::nodes_traversed() const {
  if (!reachable) return 0;
  return hops.empty() ? 1 : static_cast<int>(hops.size());
}

ShortestPathTree::ShortestPathTree(const RoutingGraph& graph, NodeRef source, double hop_wait_ms)
    : graph_(&graph), source_(source), hop_wait_ms_(hop_wait_ms) {
  const int n = graph.num_nodes();
  const int src = graph.index(source);
  dist_.assign(n, kUnreachable);
  std::vector<int> hops(n, -1);
  paths_.assign(n, {});
  std::vector<bool> settled(n, false);

  // dist_ charges hop_wait per traversed link; the source's wait is added on
  // lookup. Keys (latency, hops) strictly grow along any path, so every predecessor
  // on an optimal path settles before its successor and the lexicographic
  // tie-break can be resolved at relaxation time.
  using Key = std::tuple<double, int, int>;
  std::priority_queue<Key, std::vector<Key>, std::greater<>> queue;
  dist_[src] = 0.0;
  hops[src] = 0;
  paths_[src] = {src};
  queue.emplace(0.0, 0, src);
  while (!queue.empty()) {
    auto [d, h, u] = queue.top();
    queue.pop();
    if (settled[u] || d != dist_[u] || h != hops[u]) continue;
    settled[u] = true;
    for (const auto& e : graph.neighbors(u)) {
      const int v = e.to;
      if (settled[v]) continue;
      const double nd = d + e.latency_ms + hop_wait_ms_;
      const int nh = h + 1;
      bool better = nd < dist_[v] || (nd == dist_[v] && nh < hops[v]);
      if (!better && nd == dist_[v] && nh == hops[v]) {
        // Equal key: compare candidate prefix path_u against v's current prefix.
        const auto& cur = paths_[v];
        better = std::lexicographical_compare(paths_[u].begin(), paths_[u].end(), cur.begin(),
                                              cur.end() - 1);
        if (better) {
          paths_[v] = paths_[u];
          paths_[v].push_back(v);
        }
        continue;
      }
      if (better) {
        dist_[v] = nd;
        hops[v] = nh;
        paths_[v] = paths_[u];
        paths_[v].push_back(v);
        queue.emplace(nd, nh, v);
      }
    }
  }
}

PathResult ShortestPathTree::path_to(NodeRef target) const {
  const int t = graph_->index(target);
  PathResult r;
  if (dist_[t] == kUnreachable) return r;
  r.reachable = true;
  const auto& p = paths_[t];
  if (p.size() > 1) {
    r.hops.reserve(p.size());
    for (int i : p) r.hops.push_back(graph_->node(i));
  }
  r.latency_ms = dist_[t] + hop_wait_ms_;
  return r;
}

double ShortestPathTree::latency_to(NodeRef target) const {
  const int t = graph_->index(target);
  if (dist_[t] == kUnreachable) return kUnreachable;
  return dist_[t] + hop_wait_ms_;
}

PathResult shortest_path(const RoutingGraph& graph, NodeRef source, NodeRef target,
                         double hop_wait_ms) {
  graph.index(target);
  return ShortestPathTree(graph, source, hop_wait_ms).path_to(target);
}

const ShortestPathTree& PathCache::from(NodeRef source) {
  auto it = trees_.find(source);
  if (it == trees_.end())
    it = trees_.emplace(source, ShortestPathTree(*graph_, source, hop_wait_ms_)).first;
  return it->second;
}

namespace {

const EdgeServer* find_server(std::span<const EdgeServer> servers, int id) {
  if (id >= 0 && id < static_cast<int>(servers.size()) && servers[id].id == id) return &servers[id];
  for (const auto& s : servers)
    if (s.id == id) return &s;
  return nullptr;
}

// Strict ordering on (cost, id).
bool cheaper(const EdgeServer& a, const EdgeServer& b) {
  return a.cost < b.cost || (a.cost == b.cost && a.id < b.id);
}

}  // namespace

Allocation select_server(const ShortestPathTree& from_source, std::span<const EdgeServer> servers,
                         const Task& task, bool latency_aware) {
  const EdgeServer* best = nullptr;
  const EdgeServer* best_feasible = nullptr;
  for (const auto& s : servers) {
    if (!best || cheaper(s, *best)) best = &s;
    if (latency_aware && from_source.latency_to(s.attach) < task.deadline_ms &&
        (!best_feasible || cheaper(s, *best_feasible)))
      best_feasible = &s;
  }
  if (best_feasible) best = best_feasible;
  Allocation a;
  a.task_id = task.task_id;
  if (!best) return a;
  a.server_id = best->id;
  a.server_cost = best->cost;
  a.path = from_source.path_to(best->attach);
  return a;
}

Allocation select_server(const RoutingGraph& view, std::span<const EdgeServer> servers,
                         const Task& task, double hop_wait_ms, bool latency_aware) {
  return select_server(ShortestPathTree(view, task.source, hop_wait_ms), servers, task,
                       latency_aware);
}

OracleChoice oracle_best_server(const ShortestPathTree& truth_from_source,
                                std::span<const EdgeServer> truth_servers, const Task& task,
                                bool unconstrained) {
  const EdgeServer* best = nullptr;
  const EdgeServer* best_feasible = nullptr;
  for (const auto& s : truth_servers) {
    if (!best || cheaper(s, *best)) best = &s;
    if (!unconstrained && truth_from_source.latency_to(s.attach) <= task.deadline_ms &&
        (!best_feasible || cheaper(s, *best_feasible)))
      best_feasible = &s;
  }
  OracleChoice c;
  const EdgeServer* chosen = unconstrained ? best : best_feasible;
  c.latency_feasible = chosen != nullptr;
  if (!chosen) chosen = best;
  if (!chosen) return c;
  if (unconstrained) c.latency_feasible = truth_from_source.latency_to(chosen->attach) <= task.deadline_ms;
  c.server_id = chosen->id;
  c.cost = chosen->cost;
  c.latency_ms = truth_from_source.latency_to(chosen->attach);
  return c;
}

OracleChoice oracle_best_server(const GroundTruthNetwork& truth, const Task& task,
                                bool unconstrained) {
  const RoutingGraph g = build_graph(truth);
  const auto servers = truth.all_servers();
  return oracle_best_server(ShortestPathTree(g, task.source, truth.config.hop_wait_ms), servers,
                            task, unconstrained);
}

Realization realize(const RoutingGraph& truth_graph, std::span<const EdgeServer> truth_servers,
                    const Allocation& alloc, double hop_wait_ms) {
  Realization r;
  if (const EdgeServer* s = find_server(truth_servers, alloc.server_id)) r.cost = s->cost;
  if (!alloc.path.reachable) return r;
  double sum = 0.0;
  for (std::size_t i = 1; i < alloc.path.hops.size(); ++i) {
    const auto lat = truth_graph.link_latency(alloc.path.hops[i - 1], alloc.path.hops[i]);
    if (!lat) return r;
    sum += *lat;
  }
  r.valid = true;
  r.latency_ms = sum + hop_wait_ms * alloc.path.nodes_traversed();
  return r;
}

Realization realize(const GroundTruthNetwork& truth, const Allocation& alloc) {
  const RoutingGraph g = build_graph(truth);
  const auto servers = truth.all_servers();
  return realize(g, servers, alloc, truth.config.hop_wait_ms);
}

}  // namespace syncsim

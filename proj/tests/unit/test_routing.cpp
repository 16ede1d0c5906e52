#include <doctest.h>

#include <algorithm>
#include <functional>

#include "syncsim/errors.hpp"
#include "syncsim/routing.hpp"

using namespace syncsim;

namespace {

struct Edge {
  int a, b;
  double w;
};

// Random single-domain graph with quantized weights.
std::vector<Edge> random_edges(int n, double p, Rng& rng) {
  std::vector<Edge> edges;
  for (int u = 0; u < n; ++u)
    for (int v = u + 1; v < n; ++v)
      if (bernoulli(rng, p)) edges.push_back({u, v, quantize_latency(uniform_real(rng, 0.5, 20.0))});
  return edges;
}

// All-pairs d(p) = sum(w) + hop * nodes, via Floyd-Warshall on w + hop per edge.
std::vector<std::vector<double>> floyd_warshall(int n, const std::vector<Edge>& edges, double hop) {
  std::vector<std::vector<double>> d(n, std::vector<double>(n, kUnreachable));
  for (int i = 0; i < n; ++i) d[i][i] = 0.0;
  for (const auto& e : edges) {
    d[e.a][e.b] = std::min(d[e.a][e.b], e.w + hop);
    d[e.b][e.a] = std::min(d[e.b][e.a], e.w + hop);
  }
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (d[i][k] + d[k][j] < d[i][j]) d[i][j] = d[i][k] + d[k][j];
  for (auto& row : d)
    for (auto& x : row)
      if (x != kUnreachable) x += hop;
  return d;
}

RoutingGraph single_domain(int n, const std::vector<Edge>& edges) {
  RoutingGraph g({n});
  for (const auto& e : edges) g.add_link({0, e.a}, {0, e.b}, e.w);
  return g;
}

Task task_at(NodeRef src, double deadline) {
  Task t;
  t.source = src;
  t.deadline_ms = deadline;
  return t;
}

}  // namespace

TEST_CASE("one-link path latency counts both nodes") {
  RoutingGraph g({2});
  g.add_link({0, 0}, {0, 1}, 3.0);
  const auto p = shortest_path(g, {0, 0}, {0, 1}, 1.0);
  CHECK(p.reachable);
  CHECK(p.latency_ms == 5.0);
  CHECK(p.nodes_traversed() == 2);
  CHECK(p.hops == std::vector<NodeRef>{{0, 0}, {0, 1}});
}

TEST_CASE("self path costs one hop wait") {
  RoutingGraph g({3});
  g.add_link({0, 0}, {0, 1}, 3.0);
  for (double hop : {0.0, 1.0, 2.5}) {
    const auto p = shortest_path(g, {0, 2}, {0, 2}, hop);
    CHECK(p.reachable);
    CHECK(p.latency_ms == hop);
    CHECK(p.nodes_traversed() == 1);
  }
}

TEST_CASE("unreachable and unknown nodes") {
  RoutingGraph g({2, 2});
  g.add_link({0, 0}, {0, 1}, 1.0);
  const auto p = shortest_path(g, {0, 0}, {1, 1}, 1.0);
  CHECK_FALSE(p.reachable);
  CHECK(p.latency_ms == kUnreachable);
  CHECK(p.hops.empty());
  CHECK_THROWS_AS(shortest_path(g, {0, 0}, {2, 0}, 1.0), NodeNotFoundError);
  CHECK_THROWS_AS(shortest_path(g, {0, 5}, {0, 0}, 1.0), NodeNotFoundError);
}

TEST_CASE("ties prefer fewer hops, then the smaller node sequence") {
  // 0-1-2 costs 4+4+3 = 11, 0-2 costs 9+2 = 11.
  RoutingGraph g({4});
  g.add_link({0, 0}, {0, 1}, 4.0);
  g.add_link({0, 1}, {0, 2}, 4.0);
  g.add_link({0, 0}, {0, 2}, 9.0);
  auto p = shortest_path(g, {0, 0}, {0, 2}, 1.0);
  CHECK(p.latency_ms == 11.0);
  CHECK(p.hops.size() == 2);

  RoutingGraph h({4});
  h.add_link({0, 0}, {0, 2}, 2.0);
  h.add_link({0, 2}, {0, 3}, 2.0);
  h.add_link({0, 0}, {0, 1}, 2.0);
  h.add_link({0, 1}, {0, 3}, 2.0);
  p = shortest_path(h, {0, 0}, {0, 3}, 1.0);
  CHECK(p.hops == std::vector<NodeRef>{{0, 0}, {0, 1}, {0, 3}});
}

TEST_CASE("parallel links keep the lower latency") {
  RoutingGraph g({2});
  g.add_link({0, 0}, {0, 1}, 7.0);
  g.add_link({0, 1}, {0, 0}, 2.0);
  g.add_link({0, 0}, {0, 1}, 5.0);
  CHECK(*g.link_latency({0, 0}, {0, 1}) == 2.0);
  CHECK_FALSE(g.link_latency({0, 0}, {0, 0}).has_value());
}

TEST_CASE("shortest paths match a Floyd-Warshall oracle on 1000 random graphs") {
  Rng rng = make_rng(2024, Stream::kTopology);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 2 + trial % 9;
    const double hop = trial % 3 == 0 ? 0.0 : 1.0;
    const auto edges = random_edges(n, 0.35, rng);
    const auto oracle = floyd_warshall(n, edges, hop);
    const RoutingGraph g = single_domain(n, edges);
    for (int s = 0; s < n; ++s) {
      const ShortestPathTree tree(g, {0, s}, hop);
      for (int t = 0; t < n; ++t) {
        const auto p = tree.path_to({0, t});
        REQUIRE(p.latency_ms == oracle[s][t]);
        REQUIRE(p.reachable == (oracle[s][t] != kUnreachable));
        if (!p.reachable) continue;
        // The reported hops are a real path with the reported latency.
        double sum = hop * static_cast<double>(p.nodes_traversed());
        for (std::size_t i = 1; i < p.hops.size(); ++i) {
          const auto w = g.link_latency(p.hops[i - 1], p.hops[i]);
          REQUIRE(w.has_value());
          sum += *w;
        }
        REQUIRE(sum == p.latency_ms);
        if (s == t) {
          REQUIRE(p.hops.empty());
          continue;
        }
        REQUIRE(p.hops.front() == NodeRef{0, s});
        REQUIRE(p.hops.back() == NodeRef{0, t});
      }
    }
  }
}

TEST_CASE("multi-domain graphs route across gateways") {
  NetworkConfig c;
  c.n_domains = 5;
  c.devices_min = 2;
  c.devices_max = 5;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    c.seed = seed;
    const auto net = generate_network(c);
    const RoutingGraph g = build_graph(net);
    // Flatten to one index space and compare with Floyd-Warshall.
    std::vector<Edge> edges;
    for (int d = 0; d < net.n_domains(); ++d)
      for (const auto& l : net.domains[d].links)
        if (!l.failed) edges.push_back({g.index({d, l.u}), g.index({d, l.v}), l.latency_ms});
    for (const auto& gl : net.gateway_links)
      edges.push_back({g.index({gl.domain_a, gl.node_a}), g.index({gl.domain_b, gl.node_b}), gl.latency_ms});
    const auto oracle = floyd_warshall(g.num_nodes(), edges, c.hop_wait_ms);
    for (int s = 0; s < g.num_nodes(); ++s) {
      const ShortestPathTree tree(g, g.node(s), c.hop_wait_ms);
      for (int t = 0; t < g.num_nodes(); ++t) REQUIRE(tree.latency_to(g.node(t)) == oracle[s][t]);
    }
  }
}

TEST_CASE("controller choice is the cheapest server by id") {
  RoutingGraph g({3});
  g.add_link({0, 0}, {0, 1}, 1.0);
  g.add_link({0, 1}, {0, 2}, 1.0);
  std::vector<EdgeServer> servers = {{0, {0, 0}, 40.0}, {1, {0, 1}, 20.0}, {2, {0, 2}, 90.0}};
  auto a = select_server(g, servers, task_at({0, 0}, 100.0), 1.0);
  CHECK(a.server_id == 1);
  CHECK(a.server_cost == 20.0);
  CHECK(a.path.reachable);

  servers = {{0, {0, 2}, 20.0}, {1, {0, 1}, 20.0}};
  CHECK(select_server(g, servers, task_at({0, 0}, 100.0), 1.0).server_id == 0);
}

TEST_CASE("cheapest server in another component is still chosen") {
  RoutingGraph g({2, 1});
  g.add_link({0, 0}, {0, 1}, 1.0);
  const std::vector<EdgeServer> servers = {{0, {0, 1}, 50.0}, {1, {1, 0}, 10.0}};
  const auto a = select_server(g, servers, task_at({0, 0}, 100.0), 1.0);
  CHECK(a.server_id == 1);
  CHECK_FALSE(a.path.reachable);
}

TEST_CASE("latency-aware choice prefers servers that meet the deadline") {
  RoutingGraph g({3});
  g.add_link({0, 0}, {0, 1}, 2.0);
  g.add_link({0, 0}, {0, 2}, 23.0);
  const std::vector<EdgeServer> servers = {{0, {0, 2}, 10.0}, {1, {0, 1}, 30.0}};
  const Task t = task_at({0, 0}, 10.0);
  CHECK(select_server(g, servers, t, 1.0, false).server_id == 0);
  CHECK(select_server(g, servers, t, 1.0, true).server_id == 1);
  // Nothing meets a 1 ms deadline: fall back to the cheapest.
  CHECK(select_server(g, servers, task_at({0, 0}, 1.0), 1.0, true).server_id == 0);
}

TEST_CASE("oracle switches to the cheapest feasible server") {
  // Cheapest server 25 ms away, second-cheapest 8 ms away, deadline 10 ms.
  RoutingGraph g({3});
  g.add_link({0, 0}, {0, 1}, 6.0);
  g.add_link({0, 0}, {0, 2}, 23.0);
  const std::vector<EdgeServer> servers = {{0, {0, 2}, 20.0}, {1, {0, 1}, 30.0}, {2, {0, 1}, 60.0}};
  const ShortestPathTree tree(g, {0, 0}, 1.0);
  auto o = oracle_best_server(tree, servers, task_at({0, 0}, 10.0));
  CHECK(o.server_id == 1);
  CHECK(o.latency_feasible);
  CHECK(o.latency_ms == 8.0);

  // Not binding: global argmin.
  o = oracle_best_server(tree, servers, task_at({0, 0}, 100.0));
  CHECK(o.server_id == 0);
  CHECK(o.server_id == select_server(tree, servers, task_at({0, 0}, 100.0)).server_id);

  // Infeasible: global argmin flagged infeasible.
  o = oracle_best_server(tree, servers, task_at({0, 0}, 2.0));
  CHECK(o.server_id == 0);
  CHECK_FALSE(o.latency_feasible);

  o = oracle_best_server(tree, servers, task_at({0, 0}, 10.0), true);
  CHECK(o.server_id == 0);
  CHECK_FALSE(o.latency_feasible);
}

TEST_CASE("oracle matches exhaustive enumeration of simple paths") {
  Rng rng = make_rng(77, Stream::kTopology);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 3 + trial % 5;
    const auto edges = random_edges(n, 0.5, rng);
    const RoutingGraph g = single_domain(n, edges);
    std::vector<EdgeServer> servers;
    for (int s = 0; s < 4; ++s)
      servers.push_back({s, {0, uniform_int(rng, 0, n - 1)}, std::round(uniform_real(rng, 20, 100))});
    const int src = uniform_int(rng, 0, n - 1);
    const double deadline = uniform_real(rng, 2.0, 30.0);

    // Minimum latency to every node by DFS over simple paths.
    std::vector<double> best(n, kUnreachable);
    std::vector<bool> on_path(n, false);
    std::function<void(int, double, int)> dfs = [&](int u, double sum, int nodes) {
      best[u] = std::min(best[u], sum + 1.0 * nodes);
      on_path[u] = true;
      for (const auto& e : edges) {
        int v = e.a == u ? e.b : e.b == u ? e.a : -1;
        if (v >= 0 && !on_path[v]) dfs(v, sum + e.w, nodes + 1);
      }
      on_path[u] = false;
    };
    dfs(src, 0.0, 1);

    int expect = -1;
    for (const auto& s : servers) {
      if (best[s.attach.node] > deadline) continue;
      if (expect < 0 || s.cost < servers[expect].cost) expect = s.id;
    }
    const auto o = oracle_best_server(ShortestPathTree(g, {0, src}, 1.0), servers, task_at({0, src}, deadline));
    CHECK(o.latency_feasible == (expect >= 0));
    if (expect >= 0) CHECK(o.server_id == expect);
  }
}

TEST_CASE("realization is scored against the truth graph") {
  RoutingGraph view({2});
  view.add_link({0, 0}, {0, 1}, 5.0);
  const std::vector<EdgeServer> servers = {{0, {0, 1}, 42.0}};
  const auto alloc = select_server(view, servers, task_at({0, 0}, 100.0), 1.0);

  auto r = realize(view, servers, alloc, 1.0);
  CHECK(r.valid);
  CHECK(r.latency_ms == alloc.path.latency_ms);
  CHECK(r.cost == 42.0);

  RoutingGraph truth({2});
  truth.add_link({0, 0}, {0, 1}, 9.0);
  r = realize(truth, servers, alloc, 1.0);
  CHECK(r.valid);
  CHECK(r.latency_ms == 11.0);

  const RoutingGraph failed({2});
  r = realize(failed, servers, alloc, 1.0);
  CHECK_FALSE(r.valid);
  CHECK(r.latency_ms == kUnreachable);
}

TEST_CASE("removing a link never shortens a path") {
  Rng rng = make_rng(91, Stream::kTopology);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 3 + trial % 8;
    auto edges = random_edges(n, 0.5, rng);
    if (edges.empty()) continue;
    const auto before = floyd_warshall(n, edges, 1.0);
    const RoutingGraph full = single_domain(n, edges);
    edges.erase(edges.begin() + uniform_int(rng, 0, static_cast<int>(edges.size()) - 1));
    const RoutingGraph cut = single_domain(n, edges);
    for (int s = 0; s < n; ++s) {
      const ShortestPathTree a(full, {0, s}, 1.0), b(cut, {0, s}, 1.0);
      for (int t = 0; t < n; ++t) {
        CHECK(a.latency_to({0, t}) == before[s][t]);
        CHECK(b.latency_to({0, t}) >= a.latency_to({0, t}));
      }
    }
  }
}

TEST_CASE("oracle cost never exceeds any feasible allocation") {
  Rng rng = make_rng(92, Stream::kTopology);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 3 + trial % 6;
    const RoutingGraph g = single_domain(n, random_edges(n, 0.6, rng));
    std::vector<EdgeServer> servers;
    for (int s = 0; s < 5; ++s)
      servers.push_back({s, {0, uniform_int(rng, 0, n - 1)}, std::round(uniform_real(rng, 20, 100))});
    const Task task = task_at({0, uniform_int(rng, 0, n - 1)}, uniform_real(rng, 2.0, 40.0));
    const ShortestPathTree tree(g, task.source, 1.0);
    const auto o = oracle_best_server(tree, servers, task);
    if (!o.latency_feasible) continue;
    for (const auto& s : servers)
      if (tree.latency_to(s.attach) <= task.deadline_ms) CHECK(o.cost <= s.cost);
  }
}

TEST_CASE("identical inputs give identical paths") {
  Rng rng = make_rng(93, Stream::kTopology);
  const auto edges = random_edges(10, 0.4, rng);
  const RoutingGraph g = single_domain(10, edges);
  for (int t = 0; t < 10; ++t) {
    const auto a = shortest_path(g, {0, 0}, {0, t}, 1.0);
    const auto b = shortest_path(single_domain(10, edges), {0, 0}, {0, t}, 1.0);
    CHECK(a.hops == b.hops);
    CHECK(a.latency_ms == b.latency_ms);
  }
}

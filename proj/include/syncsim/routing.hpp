#pragma once

#include <limits>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "syncsim/topology.hpp"

namespace syncsim {

inline constexpr double kUnreachable = std::numeric_limits<double>::infinity();

// Undirected latency graph over (domain, node) pairs. Failed links are simply
// never added. Global indices follow (domain, node) lexicographic order.
class RoutingGraph {
 public:
  struct Edge {
    int to;
    double latency_ms;
  };

  explicit RoutingGraph(std::vector<int> domain_sizes);

  // Parallel links keep the lower latency.
  void add_link(NodeRef a, NodeRef b, double latency_ms);

  int num_nodes() const { return offsets_.back(); }
  bool contains(NodeRef n) const;
  // Throws NodeNotFoundError.
  int index(NodeRef n) const;
  NodeRef node(int index) const;
  const std::vector<Edge>& neighbors(int index) const { return adjacency_[index]; }
  std::optional<double> link_latency(NodeRef a, NodeRef b) const;

 private:
  std::vector<int> offsets_;
  std::vector<std::vector<Edge>> adjacency_;
};

// Graph of the ground truth: non-failed intra links plus all gateway links.
RoutingGraph build_graph(const GroundTruthNetwork& net);

struct PathResult {
  std::vector<NodeRef> hops;
  double latency_ms = kUnreachable;
  bool reachable = false;

  // Nodes the path passes through, including both endpoints.
  int nodes_traversed() const;
};

// Single-source shortest paths under d(p) = sum of link latencies +
// hop_wait per traversed node. Ties go to fewer hops, then to the
// lexicographically smallest node sequence.
class ShortestPathTree {
 public:
  ShortestPathTree(const RoutingGraph& graph, NodeRef source, double hop_wait_ms);

  PathResult path_to(NodeRef target) const;
  double latency_to(NodeRef target) const;
  NodeRef source() const { return source_; }

 private:
  const RoutingGraph* graph_;
  NodeRef source_;
  double hop_wait_ms_;
  std::vector<double> dist_;
  std::vector<std::vector<int>> paths_;
};

// Throws NodeNotFoundError when either endpoint is not in the graph.
PathResult shortest_path(const RoutingGraph& graph, NodeRef source, NodeRef target,
                         double hop_wait_ms);

// Lazily computed trees keyed by source, for one graph snapshot.
class PathCache {
 public:
  PathCache(const RoutingGraph& graph, double hop_wait_ms)
      : graph_(&graph), hop_wait_ms_(hop_wait_ms) {}
  const ShortestPathTree& from(NodeRef source);

 private:
  const RoutingGraph* graph_;
  double hop_wait_ms_;
  std::map<NodeRef, ShortestPathTree> trees_;
};

struct Task {
  long task_id = 0;
  NodeRef source;
  double deadline_ms = 0.0;
  long period_created = 0;
  int attempts = 0;
};

struct Allocation {
  long task_id = 0;
  int server_id = -1;
  PathResult path;
  double server_cost = 0.0;
};

// Controller-side server choice on a (possibly stale) view: cheapest server,
// ties to the smallest id. With latency_aware, the cheapest server whose view path
// meets the deadline is preferred, falling back to the global cheapest.
Allocation select_server(const ShortestPathTree& from_source, std::span<const EdgeServer> servers,
                         const Task& task, bool latency_aware = false);
Allocation select_server(const RoutingGraph& view, std::span<const EdgeServer> servers,
                         const Task& task, double hop_wait_ms, bool latency_aware = false);

struct OracleChoice {
  int server_id = -1;
  bool latency_feasible = false;
  double cost = 0.0;
  double latency_ms = kUnreachable;
};

// Cheapest server whose ground-truth shortest path satisfies d(p) <= deadline;
// when none does, the global cheapest with latency_feasible = false.
OracleChoice oracle_best_server(const ShortestPathTree& truth_from_source,
                                std::span<const EdgeServer> truth_servers, const Task& task,
                                bool unconstrained = false);
OracleChoice oracle_best_server(const GroundTruthNetwork& truth, const Task& task,
                                bool unconstrained = false);

struct Realization {
  double latency_ms = kUnreachable;
  double cost = 0.0;
  bool valid = false;
};

// Scores an allocation's path against the ground truth graph.
Realization realize(const RoutingGraph& truth_graph, std::span<const EdgeServer> truth_servers,
                    const Allocation& alloc, double hop_wait_ms);
Realization realize(const GroundTruthNetwork& truth, const Allocation& alloc);

}  // namespace syncsim

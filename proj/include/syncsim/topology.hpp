#pragma once

#include <compare>
#include <cstdint>
#include <vector>

#include "syncsim/rng.hpp"

namespace syncsim {

// Latencies are kept on a 1/64 ms grid, so every path sum is exact in double
// precision and independent of summation order.
inline constexpr double kLatencyQuantum = 1.0 / 64.0;

double quantize_latency(double ms);

struct NodeRef {
  int domain = 0;
  int node = 0;

  auto operator<=>(const NodeRef&) const = default;
};

struct NetworkConfig {
  int n_domains = 7;
  int devices_min = 2;
  int devices_max = 15;
  int servers_per_domain = 4;
  double intra_edge_prob = 0.5;
  int inter_gateway_degree = 1;
  double link_failure_prob = 1.0 / 30.0;
  double cost_min = 20.0;
  double cost_max = 100.0;
  double intra_latency_lo = 1.0;
  double intra_latency_hi = 10.0;
  double inter_latency_lo = 5.0;
  double inter_latency_hi = 20.0;
  double hop_wait_ms = 1.0;
  // Probability that a server keeps last period's cost instead of being
  // redrawn. Zero redraws every cost every period.
  double cost_persistence_prob = 0.0;
  // Per-domain probability that the domain's state (link failures, link and
  // gateway latencies, server costs) changes in a period. Empty means every
  // domain changes every period.
  std::vector<double> domain_activity;
  std::uint64_t seed = 0;

  // Throws ConfigError.
  void validate() const;
  double activity(int domain) const;
};

struct Link {
  int u = 0;
  int v = 0;
  double base_latency_ms = 0.0;
  double latency_ms = 0.0;
  bool failed = false;
};

struct GatewayLink {
  int domain_a = 0;
  int node_a = 0;
  int domain_b = 0;
  int node_b = 0;
  double base_latency_ms = 0.0;
  double latency_ms = 0.0;

  bool touches(int domain) const { return domain_a == domain || domain_b == domain; }
};

struct EdgeServer {
  int id = 0;
  NodeRef attach;
  double cost = 0.0;
};

struct Domain {
  int num_nodes = 0;
  std::vector<bool> is_gateway;
  std::vector<Link> links;
  std::vector<EdgeServer> servers;
};

struct GroundTruthNetwork {
  NetworkConfig config;
  std::vector<Domain> domains;
  std::vector<GatewayLink> gateway_links;
  std::int64_t period = 0;

  int n_domains() const { return static_cast<int>(domains.size()); }
  int total_nodes() const;
  int total_servers() const;
  std::vector<int> domain_sizes() const;
  // Servers of all domains in id order.
  std::vector<EdgeServer> all_servers() const;
};

// Gateway link latency as carried inside an SCM.
struct GatewayLatency {
  int link_index = 0;
  double latency_ms = 0.0;
};

struct ServerCost {
  int server_id = 0;
  double cost = 0.0;
};

// Synchronization control message: a value snapshot of one domain.
struct Scm {
  int domain_id = 0;
  std::int64_t period_created = 0;
  std::vector<Link> topology;
  std::vector<GatewayLatency> gateway_latencies;
  std::vector<ServerCost> server_costs;
};

// Throws GenerationError when a domain cannot be made connected within
// kMaxGenerationAttempts draws.
inline constexpr int kMaxGenerationAttempts = 1000;
GroundTruthNetwork generate_network(const NetworkConfig& cfg, Rng& rng);
GroundTruthNetwork generate_network(const NetworkConfig& cfg);

void advance_period(GroundTruthNetwork& net, Rng& rng);

// Throws std::out_of_range for an invalid domain id.
Scm make_scm(const GroundTruthNetwork& net, int domain_id);

// Connectivity of the failure-free global graph.
bool is_connected(const GroundTruthNetwork& net);

}  // namespace syncsim

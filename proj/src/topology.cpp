#include "syncsim/topology.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>

#include <fmt/format.h>

#include "syncsim/errors.hpp"

namespace syncsim {

double quantize_latency(double ms) {
  return std::round(ms / kLatencyQuantum) * kLatencyQuantum;
}

namespace {

double draw_latency(Rng& rng, double lo, double hi) {
  double ms = quantize_latency(uniform_real(rng, lo, hi));
  return std::clamp(ms, lo, hi);
}

bool probability_ok(double p) { return p >= 0.0 && p <= 1.0; }

// Union-find over small index sets.
class Components {
 public:
  explicit Components(int n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
  int find(int x) {
    while (parent_[x] != x) x = parent_[x] = parent_[parent_[x]];
    return x;
  }
  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent_[std::max(a, b)] = std::min(a, b);
    return true;
  }
  int count() {
    int c = 0;
    for (int i = 0; i < static_cast<int>(parent_.size()); ++i) c += find(i) == i;
    return c;
  }

 private:
  std::vector<int> parent_;
};

Domain make_domain(const NetworkConfig& cfg, Rng& rng) {
  const int n = uniform_int(rng, cfg.devices_min, cfg.devices_max);
  for (int attempt = 0; attempt < kMaxGenerationAttempts; ++attempt) {
    Domain d;
    d.num_nodes = n;
    d.is_gateway.assign(n, false);
    Components comps(n);
    for (int u = 0; u < n; ++u) {
      for (int v = u + 1; v < n; ++v) {
        if (!bernoulli(rng, cfg.intra_edge_prob)) continue;
        const double lat = draw_latency(rng, cfg.intra_latency_lo, cfg.intra_latency_hi);
        d.links.push_back({u, v, lat, lat, false});
        comps.unite(u, v);
      }
    }
    if (comps.count() == 1) return d;
  }
  throw GenerationError(fmt::format(
      "could not draw a connected {}-node domain in {} attempts (intra_edge_prob={})", n,
      kMaxGenerationAttempts, cfg.intra_edge_prob));
}

}  // namespace

void NetworkConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("network config: " + msg); };
  if (n_domains < 2 || n_domains > 16) fail("n_domains must be in [2, 16]");
  if (devices_min < 1 || devices_min > devices_max) fail("devices range must satisfy 1 <= min <= max");
  if (servers_per_domain < 1) fail("servers_per_domain must be >= 1");
  if (!probability_ok(intra_edge_prob)) fail("intra_edge_prob must be in [0, 1]");
  if (!probability_ok(link_failure_prob)) fail("link_failure_prob must be in [0, 1]");
  if (!probability_ok(cost_persistence_prob)) fail("cost_persistence_prob must be in [0, 1]");
  if (inter_gateway_degree < 1) fail("inter_gateway_degree must be >= 1");
  if (cost_min > cost_max) fail("cost_min must not exceed cost_max");
  if (intra_latency_lo < 0 || intra_latency_lo > intra_latency_hi) fail("bad intra latency range");
  if (inter_latency_lo < 0 || inter_latency_lo > inter_latency_hi) fail("bad inter latency range");
  if (hop_wait_ms < 0) fail("hop_wait_ms must be >= 0");
  if (!domain_activity.empty()) {
    if (static_cast<int>(domain_activity.size()) != n_domains)
      fail("domain_activity must have one entry per domain");
    for (double a : domain_activity)
      if (!probability_ok(a)) fail("domain_activity entries must be in [0, 1]");
  }
}

double NetworkConfig::activity(int domain) const {
  return domain_activity.empty() ? 1.0 : domain_activity.at(domain);
}

int GroundTruthNetwork::total_nodes() const {
  int n = 0;
  for (const auto& d : domains) n += d.num_nodes;
  return n;
}

int GroundTruthNetwork::total_servers() const {
  int n = 0;
  for (const auto& d : domains) n += static_cast<int>(d.servers.size());
  return n;
}

std::vector<int> GroundTruthNetwork::domain_sizes() const {
  std::vector<int> sizes;
  sizes.reserve(domains.size());
  for (const auto& d : domains) sizes.push_back(d.num_nodes);
  return sizes;
}

std::vector<EdgeServer> GroundTruthNetwork::all_servers() const {
  std::vector<EdgeServer> out;
  for (const auto& d : domains) out.insert(out.end(), d.servers.begin(), d.servers.end());
  return out;
}

GroundTruthNetwork generate_network(const NetworkConfig& cfg, Rng& rng) {
  cfg.validate();
  GroundTruthNetwork net;
  net.config = cfg;
  const int n = cfg.n_domains;
  for (int d = 0; d < n; ++d) net.domains.push_back(make_domain(cfg, rng));

  // Domain-level graph: each domain links to inter_gateway_degree distinct
  // peers, then components are joined until the domain graph is connected.
  std::set<std::pair<int, int>> pairs;
  const int degree = std::min(cfg.inter_gateway_degree, n - 1);
  for (int d = 0; d < n; ++d) {
    std::vector<int> others;
    for (int o = 0; o < n; ++o)
      if (o != d) others.push_back(o);
    std::shuffle(others.begin(), others.end(), rng);
    for (int k = 0; k < degree; ++k)
      pairs.insert({std::min(d, others[k]), std::max(d, others[k])});
  }
  Components comps(n);
  for (const auto& [a, b] : pairs) comps.unite(a, b);
  while (comps.count() > 1) {
    std::vector<int> outside;
    for (int d = 0; d < n; ++d)
      if (comps.find(d) != comps.find(0)) outside.push_back(d);
    std::vector<int> inside;
    for (int d = 0; d < n; ++d)
      if (comps.find(d) == comps.find(0)) inside.push_back(d);
    const int a = inside[uniform_int(rng, 0, static_cast<int>(inside.size()) - 1)];
    const int b = outside[uniform_int(rng, 0, static_cast<int>(outside.size()) - 1)];
    pairs.insert({std::min(a, b), std::max(a, b)});
    comps.unite(a, b);
  }
  for (const auto& [a, b] : pairs) {
    GatewayLink g;
    g.domain_a = a;
    g.node_a = uniform_int(rng, 0, net.domains[a].num_nodes - 1);
    g.domain_b = b;
    g.node_b = uniform_int(rng, 0, net.domains[b].num_nodes - 1);
    g.base_latency_ms = g.latency_ms = draw_latency(rng, cfg.inter_latency_lo, cfg.inter_latency_hi);
    net.domains[a].is_gateway[g.node_a] = true;
    net.domains[b].is_gateway[g.node_b] = true;
    net.gateway_links.push_back(g);
  }

  int next_id = 0;
  for (int d = 0; d < n; ++d) {
    auto& dom = net.domains[d];
    for (int k = 0; k < cfg.servers_per_domain; ++k) {
      EdgeServer s;
      s.id = next_id++;
      s.attach = {d, uniform_int(rng, 0, dom.num_nodes - 1)};
      s.cost = uniform_real(rng, cfg.cost_min, cfg.cost_max);
      dom.servers.push_back(s);
    }
  }
  if (!is_connected(net)) throw GenerationError("generated network is not connected");
  return net;
}

GroundTruthNetwork generate_network(const NetworkConfig& cfg) {
  Rng rng = make_rng(cfg.seed, Stream::kTopology);
  return generate_network(cfg, rng);
}

void advance_period(GroundTruthNetwork& net, Rng& rng) {
  const auto& cfg = net.config;
  ++net.period;
  std::vector<bool> changed(net.domains.size());
  for (std::size_t d = 0; d < net.domains.size(); ++d) {
    changed[d] = bernoulli(rng, cfg.activity(static_cast<int>(d)));
    if (!changed[d]) continue;
    auto& dom = net.domains[d];
    for (auto& link : dom.links) {
      link.failed = bernoulli(rng, cfg.link_failure_prob);
      link.latency_ms = draw_latency(rng, cfg.intra_latency_lo, cfg.intra_latency_hi);
    }
    for (auto& server : dom.servers) {
      if (bernoulli(rng, cfg.cost_persistence_prob)) continue;
      server.cost = uniform_real(rng, cfg.cost_min, cfg.cost_max);
    }
  }
  for (auto& g : net.gateway_links) {
    if (!changed[g.domain_a] && !changed[g.domain_b]) continue;
    g.latency_ms = draw_latency(rng, cfg.inter_latency_lo, cfg.inter_latency_hi);
  }
}

Scm make_scm(const GroundTruthNetwork& net, int domain_id) {
  if (domain_id < 0 || domain_id >= net.n_domains())
    throw std::out_of_range(fmt::format("domain id {} out of range [0, {})", domain_id, net.n_domains()));
  const Domain& dom = net.domains[domain_id];
  Scm scm;
  scm.domain_id = domain_id;
  scm.period_created = net.period;
  scm.topology = dom.links;
  for (int i = 0; i < static_cast<int>(net.gateway_links.size()); ++i) {
    const auto& g = net.gateway_links[i];
    if (g.touches(domain_id)) scm.gateway_latencies.push_back({i, g.latency_ms});
  }
  for (const auto& s : dom.servers) scm.server_costs.push_back({s.id, s.cost});
  return scm;
}

bool is_connected(const GroundTruthNetwork& net) {
  std::vector<int> offset(net.domains.size() + 1, 0);
  for (std::size_t d = 0; d < net.domains.size(); ++d)
    offset[d + 1] = offset[d] + net.domains[d].num_nodes;
  Components comps(offset.back());
  for (std::size_t d = 0; d < net.domains.size(); ++d)
    for (const auto& l : net.domains[d].links) comps.unite(offset[d] + l.u, offset[d] + l.v);
  for (const auto& g : net.gateway_links)
    comps.unite(offset[g.domain_a] + g.node_a, offset[g.domain_b] + g.node_b);
  return comps.count() == 1;
}

}  // namespace syncsim

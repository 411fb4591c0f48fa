#include "kserver/offline.hpp"

#include <algorithm>
#include <optional>
#include <queue>
#include <string>
#include <utility>

#include <nlohmann/json.hpp>

#include "kserver/error.hpp"

namespace mp = boost::multiprecision;

namespace kserver {

namespace {

void validate_trace(const RequestTrace& t) {
  if (t.n < 1) throw Error("InvalidTrace", "point set is empty");
  if (static_cast<int>(t.dist.size()) != t.n * t.n)
    throw Error("InvalidTrace", "distance matrix size mismatch");
  for (int a = 0; a < t.n; ++a) {
    if (t.d(a, a) != Rat(0))
      throw Error("InvalidTrace",
                  "nonzero self-distance at point " + std::to_string(a));
    for (int b = 0; b < t.n; ++b) {
      if (t.d(a, b) < Rat(0)) throw Error("InvalidTrace", "negative distance");
      if (t.d(a, b) != t.d(b, a))
        throw Error("InvalidTrace", "asymmetric distance");
    }
  }
  if (t.initial.empty()) throw Error("InvalidTrace", "no servers");
  for (int p : t.initial)
    if (p < 0 || p >= t.n)
      throw Error("InvalidTrace", "initial position out of range");
  for (int p : t.requests)
    if (p < 0 || p >= t.n)
      throw Error("InvalidTrace", "request out of range");
}

// Tree distance between arbitrary nodes (path through their meet).
Rat node_distance(const WeightedTree& tree, int a, int b) {
  const int meet = tree.lca(a, b);
  Rat total = 0;
  for (int u = a; u != meet; u = tree.parent(u)) total += tree.weight(u);
  for (int u = b; u != meet; u = tree.parent(u)) total += tree.weight(u);
  return total;
}

// Min-cost flow with nonnegative exact integer costs: successive
// shortest augmenting paths with node potentials.
class MinCostFlow {
 public:
  explicit MinCostFlow(int nodes) : graph_(nodes) {}

  void add_edge(int from, int to, long long cap, Int cost) {
    graph_[from].push_back({to, static_cast<int>(graph_[to].size()), cap,
                            cost});
    graph_[to].push_back({from, static_cast<int>(graph_[from].size()) - 1, 0,
                          -cost});
  }

  // Pushes up to target units; returns (units pushed, total cost).
  std::pair<long long, Int> run(int s, int t, long long target) {
    const int n = static_cast<int>(graph_.size());
    std::vector<Int> potential(n, Int(0));
    long long pushed = 0;
    Int total(0);
    while (pushed < target) {
      std::vector<std::optional<Int>> dist(n);
      std::vector<int> prev_node(n, -1), prev_edge(n, -1);
      using Item = std::pair<Int, int>;
      std::priority_queue<Item, std::vector<Item>, std::greater<Item>> pq;
      dist[s] = Int(0);
      pq.push({Int(0), s});
      while (!pq.empty()) {
        auto [du, u] = pq.top();
        pq.pop();
        if (*dist[u] < du) continue;
        for (int i = 0; i < static_cast<int>(graph_[u].size()); ++i) {
          const Edge& e = graph_[u][i];
          if (e.cap <= 0) continue;
          Int nd = du + e.cost + potential[u] - potential[e.to];
          if (!dist[e.to] || nd < *dist[e.to]) {
            dist[e.to] = nd;
            prev_node[e.to] = u;
            prev_edge[e.to] = i;
            pq.push({nd, e.to});
          }
        }
      }
      if (!dist[t]) break;
      for (int u = 0; u < n; ++u)
        if (dist[u]) potential[u] += *dist[u];
      long long aug = target - pushed;
      for (int u = t; u != s; u = prev_node[u])
        aug = std::min(aug, graph_[prev_node[u]][prev_edge[u]].cap);
      for (int u = t; u != s; u = prev_node[u]) {
        Edge& e = graph_[prev_node[u]][prev_edge[u]];
        e.cap -= aug;
        graph_[u][e.rev].cap += aug;
        total += e.cost * aug;
      }
      pushed += aug;
    }
    return {pushed, total};
  }

 private:
  struct Edge {
    int to;
    int rev;
    long long cap;
    Int cost;
  };
  std::vector<std::vector<Edge>> graph_;
};

// All size-k multisets over {0..n-1} as non-decreasing id vectors.
std::vector<std::vector<int>> enumerate_multisets(int n, int k) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur;
  auto rec = [&](auto&& self, int low) -> void {
    if (static_cast<int>(cur.size()) == k) {
      out.push_back(cur);
      return;
    }
    for (int p = low; p < n; ++p) {
      cur.push_back(p);
      self(self, p);
      cur.pop_back();
    }
  };
  rec(rec, 0);
  return out;
}

// Min-cost perfect matching between two size-k multisets by exhausting
// distinct permutations of the target.
Rat min_matching(const RequestTrace& trace, const std::vector<int>& a,
                 std::vector<int> b) {
  std::sort(b.begin(), b.end());
  std::optional<Rat> best;
  do {
    Rat c = 0;
    for (size_t i = 0; i < a.size(); ++i) c += trace.d(a[i], b[i]);
    if (!best || c < *best) best = c;
  } while (std::next_permutation(b.begin(), b.end()));
  return *best;
}

}  // namespace

RequestTrace make_trace(const MetricSpace& space, std::vector<int> initial,
                        std::vector<int> requests) {
  RequestTrace t;
  t.n = space.n();
  t.dist.reserve(t.n * t.n);
  for (int a = 0; a < t.n; ++a)
    for (int b = 0; b < t.n; ++b) t.dist.emplace_back(space.dist(a, b));
  t.initial = std::move(initial);
  t.requests = std::move(requests);
  validate_trace(t);
  return t;
}

RequestTrace make_trace(const TreePtr& tree, const ServerConfiguration& start,
                        const std::vector<int>& leaf_requests) {
  RequestTrace t;
  t.n = tree->leaf_count();
  t.dist.reserve(t.n * t.n);
  for (int a : tree->leaves())
    for (int b : tree->leaves()) t.dist.push_back(tree->leaf_distance(a, b));
  for (int leaf : start.leaves) {
    if (leaf < 0 || leaf >= tree->node_count() || !tree->is_leaf(leaf))
      throw Error("UnknownLeaf", std::to_string(leaf));
    t.initial.push_back(tree->leaf_index(leaf));
  }
  for (int leaf : leaf_requests) {
    if (leaf < 0 || leaf >= tree->node_count() || !tree->is_leaf(leaf))
      throw Error("UnknownLeaf", std::to_string(leaf));
    t.requests.push_back(tree->leaf_index(leaf));
  }
  validate_trace(t);
  return t;
}

std::string trace_json(const RequestTrace& trace) {
  nlohmann::ordered_json j;
  j["n"] = trace.n;
  auto& d = j["dist"] = nlohmann::ordered_json::array();
  for (const Rat& r : trace.dist) d.push_back(rat_to_string(r));
  j["initial"] = trace.initial;
  j["requests"] = trace.requests;
  return j.dump();
}

RequestTrace trace_from_json(const std::string& text) {
  RequestTrace t;
  try {
    auto j = nlohmann::json::parse(text);
    t.n = j.at("n").get<int>();
    for (const auto& s : j.at("dist"))
      t.dist.emplace_back(s.get<std::string>());
    t.initial = j.at("initial").get<std::vector<int>>();
    t.requests = j.at("requests").get<std::vector<int>>();
  } catch (const Error&) {
    throw;
  } catch (const std::exception& ex) {
    throw Error("InvalidTrace", ex.what());
  }
  validate_trace(t);
  return t;
}

Rat opt_flow(const RequestTrace& trace) {
  validate_trace(trace);
  const int k = trace.k();
  const int T = trace.horizon();
  if (T == 0) return Rat(0);

  // Scale every distance to an exact integer.
  Int denom(1);
  for (const Rat& r : trace.dist)
    denom = mp::lcm(denom, Int(mp::denominator(r)));
  auto scaled = [&](const Rat& r) {
    return Int(mp::numerator(r)) * (denom / Int(mp::denominator(r)));
  };

  // One unit per server slot plus one per coverage edge: a request's
  // service edge (unit lower bound) becomes an extra source at its
  // departure node and an extra sink at its arrival node.
  const int SS = 0, TT = 1, S = 2, D = 3;
  auto slot = [&](int i) { return 4 + i; };
  auto arrive = [&](int j) { return 4 + k + j; };
  auto depart = [&](int j) { return 4 + k + T + j; };
  MinCostFlow flow(4 + k + 2 * T);

  flow.add_edge(SS, S, k, Int(0));
  flow.add_edge(D, TT, k, Int(0));
  for (int i = 0; i < k; ++i) {
    flow.add_edge(S, slot(i), 1, Int(0));
    flow.add_edge(slot(i), D, 1, Int(0));
    for (int j = 0; j < T; ++j)
      flow.add_edge(slot(i), arrive(j), 1,
                    scaled(trace.d(trace.initial[i], trace.requests[j])));
  }
  for (int j = 0; j < T; ++j) {
    flow.add_edge(SS, depart(j), 1, Int(0));
    flow.add_edge(arrive(j), TT, 1, Int(0));
    flow.add_edge(depart(j), D, 1, Int(0));
    for (int l = j + 1; l < T; ++l)
      flow.add_edge(depart(j), arrive(l), 1,
                    scaled(trace.d(trace.requests[j], trace.requests[l])));
  }

  auto [pushed, cost] = flow.run(SS, TT, static_cast<long long>(k) + T);
  if (pushed < static_cast<long long>(k) + T)
    throw Error("InfeasibleTrace",
                "coverage flow saturated at " + std::to_string(pushed) +
                    " of " + std::to_string(k + T) + " units");
  return Rat(cost, denom);
}

Rat opt_dp(const RequestTrace& trace) {
  validate_trace(trace);
  const int k = trace.k();
  const int T = trace.horizon();
  if (T == 0) return Rat(0);
  if (T > 50)
    throw Error("InstanceTooLarge", "horizon " + std::to_string(T) + " > 50");
  if (k > 8)
    throw Error("InstanceTooLarge",
                "matching enumeration infeasible for k = " + std::to_string(k));
  long long states = 1;
  for (int i = 1; i <= k; ++i) {
    states = states * (trace.n + i - 1) / i;
    if (states > 10000)
      throw Error("InstanceTooLarge", "more than 10^4 configurations");
  }

  const auto configs = enumerate_multisets(trace.n, k);
  std::vector<int> start = trace.initial;
  std::sort(start.begin(), start.end());

  // dp[c]: cheapest cost ending at configuration c right after serving
  // the current request (so c must contain it).
  std::vector<std::optional<Rat>> dp(configs.size());
  for (int t = 0; t < T; ++t) {
    const int rho = trace.requests[t];
    std::vector<std::optional<Rat>> next(configs.size());
    for (size_t c = 0; c < configs.size(); ++c) {
      if (!std::binary_search(configs[c].begin(), configs[c].end(), rho))
        continue;
      std::optional<Rat> best;
      if (t == 0) {
        best = min_matching(trace, start, configs[c]);
      } else {
        for (size_t p = 0; p < configs.size(); ++p) {
          if (!dp[p]) continue;
          Rat cand = *dp[p] + min_matching(trace, configs[p], configs[c]);
          if (!best || cand < *best) best = cand;
        }
      }
      next[c] = best;
    }
    dp = std::move(next);
  }

  std::optional<Rat> best;
  for (const auto& v : dp)
    if (v && (!best || *v < *best)) best = v;
  if (!best) throw Error("InfeasibleTrace", "no covering configuration");
  return *best;
}

Rat brute_transport(const MassVector& a, const MassVector& b, long long m) {
  if (!WeightedTree::same_structure(*a.tree(), *b.tree()))
    throw Error("TreeMismatch", "measures live on different trees");
  if (a.mass() != b.mass())
    throw Error("MassMismatch",
                rat_to_string(a.mass()) + " vs " + rat_to_string(b.mass()));
  if (m < 1) throw Error("InvalidMeasure", "unit granularity must be positive");

  const auto& tree = *a.tree();
  auto units_of = [&](const MassVector& z) {
    std::vector<int> units;
    for (int u = 0; u < z.node_count(); ++u) {
      const Rat pm = z.point_mass(u);
      if (pm < Rat(0))
        throw Error("InvalidMeasure",
                    "negative point mass at node " + std::to_string(u));
      const Rat count = pm * Rat(m);
      if (mp::denominator(count) != 1)
        throw Error("NotBarely", "point mass " + rat_to_string(pm) +
                                     " at node " + std::to_string(u));
      const long long c = Int(mp::numerator(count)).convert_to<long long>();
      for (long long i = 0; i < c; ++i) units.push_back(u);
    }
    return units;
  };
  auto from = units_of(a);
  auto to = units_of(b);
  if (from.size() > 8)
    throw Error("InstanceTooLarge",
                std::to_string(from.size()) + " transport units > 8");
  if (from.empty()) return Rat(0);

  std::optional<Rat> best;
  std::sort(to.begin(), to.end());
  do {
    Rat c = 0;
    for (size_t i = 0; i < from.size(); ++i)
      c += node_distance(tree, from[i], to[i]);
    if (!best || c < *best) best = c;
  } while (std::next_permutation(to.begin(), to.end()));
  return *best / Rat(m);
}

}  // namespace kserver

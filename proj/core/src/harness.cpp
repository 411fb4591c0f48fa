#include "kserver/harness.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>
#include <utility>

#include "kserver/discretize.hpp"
#include "kserver/error.hpp"
#include "kserver/fractional.hpp"
#include "kserver/frt.hpp"
#include "kserver/metric_space.hpp"
#include "kserver/rounding.hpp"

namespace mp = boost::multiprecision;

namespace kserver {

RunMode mode_from_string(const std::string& name) {
  if (name == "fractional") return RunMode::Fractional;
  if (name == "barely-fractional") return RunMode::BarelyFractional;
  if (name == "barely-random") return RunMode::BarelyRandom;
  if (name == "end-to-end" || name == "end-to-end-general-metric")
    return RunMode::EndToEndGeneralMetric;
  if (name == "advice") return RunMode::Advice;
  throw Error("UnknownMode", "no run mode named '" + name + "'");
}

std::string mode_to_string(RunMode mode) {
  switch (mode) {
    case RunMode::Fractional:
      return "fractional";
    case RunMode::BarelyFractional:
      return "barely-fractional";
    case RunMode::BarelyRandom:
      return "barely-random";
    case RunMode::EndToEndGeneralMetric:
      return "end-to-end";
    case RunMode::Advice:
      return "advice";
  }
  throw Error("UnknownMode", "unrecognized run mode value");
}

namespace {

using nlohmann::ordered_json;

// The min-cost-flow oracle builds a quadratic number of arcs in the horizon;
// past this the run reports no optimum instead of stalling.
constexpr int kOptHorizonLimit = 600;
// Hard cap on ensemble size: the member list is materialized in memory.
constexpr long long kMemberLimit = 1'000'000;
// Matching in the original metric enumerates k! assignments per step.
constexpr int kMetricMatchingLimit = 6;

bool discretizes(RunMode mode) { return mode != RunMode::Fractional; }

bool rounds(RunMode mode) {
  return mode == RunMode::BarelyRandom || mode == RunMode::Advice ||
         mode == RunMode::EndToEndGeneralMetric;
}

void validate_config(const ExperimentConfig& c) {
  if (c.k < 1) throw Error("BadConfig", "k must be at least 1");
  if (c.horizon < 0) throw Error("BadConfig", "horizon must be non-negative");
  if (c.tau < 10) throw Error("BadConfig", "tau must be at least 10");
  if (c.format != "csv" && c.format != "json")
    throw Error("UnknownFormat", "ledger format must be csv or json, not '" + c.format + "'");
  const bool end_to_end = c.mode == RunMode::EndToEndGeneralMetric;
  if (c.generator == "far-point") {
    if (!end_to_end)
      throw Error("GeneratorMismatch",
                  "the far-point generator defines a general metric; run it end-to-end");
    if (c.far_distance < 1)
      throw Error("BadConfig", "far_distance must be at least 1");
  } else if (c.generator == "file") {
    if (!end_to_end)
      throw Error("GeneratorMismatch",
                  "trace files carry a general metric; run them end-to-end");
    if (c.trace_path.empty())
      throw Error("BadConfig", "the file generator needs trace_path");
  } else if (c.generator == "uniform" || c.generator == "round-robin" ||
             c.generator == "lazy") {
    if (c.points < 2) throw Error("BadConfig", "need at least two points");
    if (c.k >= c.points)
      throw Error("BadConfig", "k must be below the point count");
  } else {
    throw Error("UnknownGenerator", "no generator named '" + c.generator + "'");
  }
  if (c.round_robin_points < 0)
    throw Error("BadConfig", "round_robin_points must be non-negative");
  if (discretizes(c.mode)) {
    const long long floor_m = 2LL * c.k * c.k + c.k;
    if (c.effective_m() < floor_m)
      throw Error("GranularityTooSmall",
                  "m must be at least 2k^2 + k = " + std::to_string(floor_m));
    if (rounds(c.mode) && c.effective_m() > kMemberLimit)
      throw Error("BadConfig", "ensemble size m is capped at " +
                                   std::to_string(kMemberLimit));
  }
}

// Equal-depth tau-HST with exactly `leaves` leaves: bottom edges of weight 1,
// weights growing by tau per level, at most three children per node.  The
// quota split at each node is drawn from the instance stream.
TreePtr synth_hst(int leaves, const Rat& tau, std::mt19937_64& rng) {
  int depth = 1;
  long long cap = 3;
  while (cap < leaves) {
    ++depth;
    cap *= 3;
  }
  std::vector<Rat> level_weight(depth + 1, Rat(1));
  for (int l = depth - 1; l >= 1; --l)
    level_weight[l] = level_weight[l + 1] * tau;

  std::vector<int> parents{-1};
  std::vector<Rat> weights{Rat(0)};
  struct Frame {
    int node;
    int level;
    long long quota;
  };
  std::vector<Frame> stack{{0, 0, leaves}};
  while (!stack.empty()) {
    const Frame f = stack.back();
    stack.pop_back();
    if (f.level == depth) continue;
    long long child_cap = 1;
    for (int l = f.level + 1; l < depth; ++l) child_cap *= 3;
    long long remaining = f.quota;
    int slots = 3;
    while (remaining > 0) {
      --slots;
      const long long lo = std::max(1LL, remaining - slots * child_cap);
      const long long hi = std::min(child_cap, remaining);
      long long take = lo;
      if (hi > lo)
        take += static_cast<long long>(
            rng() % static_cast<unsigned long long>(hi - lo + 1));
      const int child = static_cast<int>(parents.size());
      parents.push_back(f.node);
      weights.push_back(level_weight[f.level + 1]);
      stack.push_back({child, f.level + 1, take});
      remaining -= take;
    }
  }
  return make_tree(std::move(parents), std::move(weights));
}

// A second generator for instance synthesis, decorrelated from the counted
// bit stream (which is reserved for the algorithm's own randomness).
std::mt19937_64 instance_rng(std::uint64_t seed) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return std::mt19937_64(z ^ (z >> 31));
}

MetricSpace far_point_metric(int k, long long far_distance) {
  const int n = k + 1;
  std::vector<std::int64_t> d(static_cast<std::size_t>(n) * n, 0);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      if (a == b) continue;
      d[a * n + b] = (a == k || b == k) ? far_distance : 1;
    }
  return MetricSpace(n, std::move(d));
}

std::vector<int> far_point_initial(int k) {
  std::vector<int> initial;
  for (int p = 0; p + 1 < k; ++p) initial.push_back(p);
  initial.push_back(k);
  return initial;
}

RequestTrace load_trace(const ExperimentConfig& config) {
  std::ifstream in(config.trace_path);
  if (!in)
    throw Error("TraceMissing", "cannot open trace file " + config.trace_path);
  std::ostringstream buf;
  buf << in.rdbuf();
  RequestTrace trace = trace_from_json(buf.str());
  if (trace.k() != config.k)
    throw Error("ConfigMismatch", "trace starts " + std::to_string(trace.k()) +
                                      " servers but the run asked for k=" +
                                      std::to_string(config.k));
  if (trace.k() >= trace.n)
    throw Error("BadConfig", "trace needs more points than servers to run");
  std::vector<int> sorted = trace.initial;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw Error("BadConfig", "co-located initial servers are not supported");
  return trace;
}

MetricSpace metric_from_trace(const RequestTrace& trace) {
  std::vector<std::int64_t> d;
  d.reserve(trace.dist.size());
  for (const Rat& r : trace.dist) {
    if (mp::denominator(r) != 1)
      throw Error("NonIntegralMetric",
                  "trace distances must be integers to embed; got " +
                      rat_to_string(r));
    d.push_back(mp::numerator(r).convert_to<std::int64_t>());
  }
  return MetricSpace(trace.n, std::move(d));
}

// Min-weight matching between equal-size point multisets of the original
// metric, by enumerating distinct assignments of the sorted left side.
Rat metric_matching(const MetricSpace& metric, std::vector<int> a,
                    const std::vector<int>& b) {
  std::sort(a.begin(), a.end());
  std::optional<std::int64_t> best;
  do {
    std::int64_t cost = 0;
    for (std::size_t i = 0; i < a.size(); ++i) cost += metric.dist(a[i], b[i]);
    if (!best || cost < *best) best = cost;
  } while (std::next_permutation(a.begin(), a.end()));
  return Rat(*best);
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

ordered_json rat_entry(const Rat& x) {
  ordered_json j;
  j["exact"] = rat_to_string(x);
  j["value"] = rat_to_double(x);
  return j;
}

}  // namespace

ExperimentConfig config_from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw Error("BadConfig", std::string("config is not valid json: ") + e.what());
  }
  ExperimentConfig c;
  try {
    if (j.contains("mode")) c.mode = mode_from_string(j.at("mode").get<std::string>());
    if (j.contains("k")) c.k = j.at("k").get<int>();
    if (j.contains("m")) c.m = j.at("m").get<long long>();
    if (j.contains("tau")) {
      if (j.at("tau").is_string())
        c.tau = rat_from_string(j.at("tau").get<std::string>());
      else
        c.tau = Rat(j.at("tau").get<long long>());
    }
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("generator")) c.generator = j.at("generator").get<std::string>();
    if (j.contains("horizon")) c.horizon = j.at("horizon").get<int>();
    if (j.contains("points")) c.points = j.at("points").get<int>();
    if (j.contains("round_robin_points"))
      c.round_robin_points = j.at("round_robin_points").get<int>();
    if (j.contains("far_distance"))
      c.far_distance = j.at("far_distance").get<long long>();
    if (j.contains("trace_path")) c.trace_path = j.at("trace_path").get<std::string>();
    if (j.contains("audit")) c.audit = j.at("audit").get<bool>();
    if (j.contains("format")) c.format = j.at("format").get<std::string>();
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error("BadConfig", std::string("config field has the wrong type: ") + e.what());
  }
  return c;
}

std::string config_json(const ExperimentConfig& config) {
  ordered_json j;
  j["mode"] = mode_to_string(config.mode);
  j["k"] = config.k;
  j["m"] = config.m;
  j["tau"] = rat_to_string(config.tau);
  j["seed"] = config.seed;
  j["generator"] = config.generator;
  j["horizon"] = config.horizon;
  j["points"] = config.points;
  j["round_robin_points"] = config.round_robin_points;
  j["far_distance"] = config.far_distance;
  j["trace_path"] = config.trace_path;
  j["audit"] = config.audit;
  j["format"] = config.format;
  return j.dump(2);
}

RequestTrace generate_trace(const ExperimentConfig& config) {
  validate_config(config);
  if (config.generator == "lazy") return run_experiment(config).trace;
  if (config.generator == "file") return load_trace(config);

  const int k = config.k;
  std::mt19937_64 rng = instance_rng(config.seed);

  if (config.generator == "far-point") {
    const MetricSpace metric = far_point_metric(k, config.far_distance);
    std::vector<int> requests;
    for (int t = 0; t < config.horizon; ++t) requests.push_back(t % k);
    return make_trace(metric, far_point_initial(k), std::move(requests));
  }

  const int points = config.points;
  const int rr_span = std::min(
      config.round_robin_points > 0 ? config.round_robin_points : k + 1, points);
  if (config.mode == RunMode::EndToEndGeneralMetric) {
    const MetricSpace metric = MetricSpace::uniform(points);
    std::vector<int> initial;
    for (int p = 0; p < k; ++p) initial.push_back(p);
    std::vector<int> requests;
    for (int t = 0; t < config.horizon; ++t)
      requests.push_back(config.generator == "round-robin"
                             ? t % rr_span
                             : static_cast<int>(rng() % points));
    return make_trace(metric, std::move(initial), std::move(requests));
  }

  const TreePtr tree = synth_hst(points, config.tau, rng);
  const auto& leaves = tree->leaves();
  const ServerConfiguration start(
      std::vector<int>(leaves.begin(), leaves.begin() + k));
  std::vector<int> leaf_requests;
  for (int t = 0; t < config.horizon; ++t) {
    const int p = config.generator == "round-robin"
                      ? t % rr_span
                      : static_cast<int>(rng() % points);
    leaf_requests.push_back(leaves[p]);
  }
  return make_trace(tree, start, leaf_requests);
}

RunReport run_experiment(const ExperimentConfig& config) {
  validate_config(config);
  const int k = config.k;
  const long long m = config.effective_m();
  const bool end_to_end = config.mode == RunMode::EndToEndGeneralMetric;

  BitStream stream(config.seed);  // algorithm randomness only, exactly counted
  std::mt19937_64 rng = instance_rng(config.seed);

  // Instance synthesis.
  std::optional<RequestTrace> file_trace;
  std::optional<MetricSpace> metric;
  std::vector<int> initial_points;
  int points = config.points;
  int horizon = config.horizon;
  if (config.generator == "file") {
    file_trace = load_trace(config);
    metric = metric_from_trace(*file_trace);
    initial_points = file_trace->initial;
    points = file_trace->n;
    horizon = file_trace->horizon();
  } else if (config.generator == "far-point") {
    metric = far_point_metric(k, config.far_distance);
    initial_points = far_point_initial(k);
    points = k + 1;
  } else if (end_to_end) {
    metric = MetricSpace::uniform(points);
    for (int p = 0; p < k; ++p) initial_points.push_back(p);
  }

  TauHST hst;
  std::vector<int> point_to_leaf, leaf_to_point;
  ServerConfiguration start;
  if (end_to_end) {
    Embedding emb = frt_embed(*metric, config.tau, stream);
    hst = std::move(emb.hst);
    point_to_leaf = std::move(emb.point_to_leaf);
    leaf_to_point = std::move(emb.leaf_to_point);
    std::vector<int> start_leaves;
    for (int p : initial_points) start_leaves.push_back(point_to_leaf[p]);
    start = ServerConfiguration(std::move(start_leaves));
  } else {
    hst = validate_hst(synth_hst(points, config.tau, rng), config.tau);
    const auto& leaves = hst.tree->leaves();
    start = ServerConfiguration(
        std::vector<int>(leaves.begin(), leaves.begin() + k));
  }
  const TreePtr& tree = hst.tree;

  // Pipeline state.
  FractionalState fst = fractional_init(hst, k, start);
  std::optional<HysteresisState> hyst;
  if (discretizes(config.mode))
    hyst.emplace(hysteresis_init(tree, k, m, start));
  std::optional<Ensemble> ens;
  if (rounds(config.mode)) ens.emplace(ensemble_init(tree, m, start));

  SuperfluousFilter::Forward forward;
  if (hyst)
    forward = [&fst, &hyst](int leaf) {
      fractional_serve(fst, leaf);
      return pipeline_feed(*hyst, fst.measure);
    };
  else
    forward = [&fst](int leaf) { return fractional_serve(fst, leaf); };
  SuperfluousFilter filter(fst.measure, std::move(forward));

  RunReport report;
  report.config = config;
  report.points = points;
  report.bits_init = stream.bits_consumed();

  const int rr_span = std::min(
      config.round_robin_points > 0 ? config.round_robin_points : k + 1, points);
  auto next_request_point = [&](int t) {
    if (config.generator == "file") return file_trace->requests[t];
    if (config.generator == "far-point") return t % k;
    if (config.generator == "round-robin") return t % rr_span;
    if (config.generator == "uniform")
      return static_cast<int>(rng() % static_cast<unsigned>(points));
    // lazy: the point the current output serves least, lowest id on ties
    const MassVector& y = filter.current();
    int best = 0;
    Rat best_mass = y.value(end_to_end ? point_to_leaf[0] : tree->leaves()[0]);
    for (int p = 1; p < points; ++p) {
      const Rat v = y.value(end_to_end ? point_to_leaf[p] : tree->leaves()[p]);
      if (v < best_mass) {
        best = p;
        best_mass = v;
      }
    }
    return best;
  };

  const bool track_members = end_to_end && ens && k <= kMetricMatchingLimit;
  std::vector<std::vector<ServerConfiguration>> member_history;
  if (track_members) member_history.push_back(ens->members);

  std::vector<int> request_points;
  Rat prev_fractional = fst.cumulative_cost;
  StageCosts prev_costs = hyst ? hyst->costs : StageCosts{};
  Rat cum_ensemble(0);
  const Rat floor_slack =
      hyst ? Rat(Int(2 * k + 1), Int(hyst->m_prime)) : Rat(0);
  const Rat lambda = hyst ? Rat(Int(hyst->m_prime), Int(2 * m)) : Rat(0);

  for (int t = 1; t <= horizon; ++t) {
    const int p = next_request_point(t - 1);
    const int leaf = end_to_end ? point_to_leaf[p] : tree->leaves()[p];
    request_points.push_back(p);

    LedgerRow row;
    row.step = t;
    row.request = end_to_end ? p : leaf;
    Rat source_step(0);
    try {
      filter.request(leaf);
      row.forwarded = filter.last_forwarded();
      row.fractional = fst.cumulative_cost - prev_fractional;
      prev_fractional = fst.cumulative_cost;
      if (hyst) {
        const StageCosts& c = hyst->costs;
        source_step = c.source - prev_costs.source;
        row.z1 = c.z1 - prev_costs.z1;
        row.z2 = c.z2 - prev_costs.z2;
        row.z3 = c.z3 - prev_costs.z3;
        row.z4 = c.z4 - prev_costs.z4;
        row.deferred = c.deferred - prev_costs.deferred;
        prev_costs = c;
      }
      if (ens) {
        row.ensemble = advance(*ens, filter.current());
        cum_ensemble += row.ensemble;
        if (track_members) member_history.push_back(ens->members);
      }
    } catch (const Error& e) {
      const std::string what = e.what();
      throw Error(e.code(), "step " + std::to_string(t) + ": " +
                                what.substr(e.code().size() + 2));
    }
    row.cum_fractional = fst.cumulative_cost;
    row.cum_deferred = hyst ? hyst->costs.deferred : Rat(0);
    row.cum_ensemble = cum_ensemble;
    row.bits = stream.bits_consumed();

    if (config.audit) {
      auto flag = [&report, t](bool ok, const char* what) {
        if (ok) return;
        ++report.violations;
        if (report.violation_notes.size() < 20)
          report.violation_notes.push_back("step " + std::to_string(t) + ": " +
                                           what);
      };
      const MassVector& out = filter.current();
      flag(out.value(leaf) >= 1, "output leaves the request unserved");
      flag(!validate(fst.measure, MeasureKind::Leaf, Rat(k)).has_value(),
           "fractional output is not a k-mass leaf measure");
      if (row.forwarded)
        flag(fst.measure.value(leaf) >= 1,
             "fractional measure leaves a forwarded request unserved");
      if (hyst) {
        const HysteresisState& h = *hyst;
        flag(!validate(h.z1, MeasureKind::Inner, Rat(k)).has_value(),
             "z1 is not a k-mass inner measure");
        flag(!validate(h.z2, MeasureKind::Inner, Rat(k), Int(h.m_prime))
                  .has_value(),
             "z2 is not (2m+2k+1)-barely");
        flag(!validate(h.z3, MeasureKind::Inner,
                       Rat(Int(h.m_prime) * k, Int(2 * m)), Int(2 * m))
                  .has_value(),
             "z3 is not a 2m-barely rescale");
        flag(!validate(h.z4, MeasureKind::Inner, Rat(k), Int(m)).has_value(),
             "z4 is not m-barely");
        flag(!validate(h.deferred, MeasureKind::Leaf, Rat(k), Int(m))
                  .has_value(),
             "deferred output is not an m-barely leaf measure");
        flag(row.z1 <= 2 * source_step, "flooring cost above twice the source");
        // Hysteresis defers sub-threshold moves and pays them back in
        // bursts, so it is only bounded by the flooring cost cumulatively.
        flag(h.costs.z2 <= h.costs.z1, "hysteresis cost above the flooring cost");
        flag(row.z3 == lambda * row.z2, "rescale cost is not exactly lambda");
        flag(row.z3 <= 2 * row.z2, "rescale cost above twice hysteresis");
        flag(row.z4 <= 2 * row.z3, "second flooring above twice the rescale");
        flag(h.costs.deferred <= h.costs.z4,
             "deferred cost above the z4 cost");
        flag(h.costs.deferred <= 8 * h.costs.source,
             "deferred cost above eight times the source");
        bool floor_ok = true;
        for (int u = 0; u < tree->node_count(); ++u)
          floor_ok = floor_ok && h.z2.value(u) >= h.z1.value(u) - floor_slack;
        flag(floor_ok, "hysteresis mass floor breached");
      }
      if (ens) {
        flag(!ensemble_check(*ens).has_value(),
             "ensemble consistency or balance violated");
        flag(balance_gap(*ens) == 0, "balance gap is nonzero");
        flag(ens->z == out, "ensemble tracks a stale measure");
        if (out.value(leaf) >= 1) {
          bool covered = true;
          for (const ServerConfiguration& member : ens->members)
            covered = covered && member.count_at(leaf) >= 1;
          flag(covered, "a member leaves the request unserved");
        }
      }
    }
    report.rows.push_back(std::move(row));
  }

  report.forwarded = filter.forwarded_count();
  report.fractional_total = fst.cumulative_cost;
  report.deferred_total = hyst ? hyst->costs.deferred : Rat(0);
  report.ensemble_total = cum_ensemble;

  if (ens) {
    report.advised = advised_cost(*ens);
    if (config.mode != RunMode::Advice) {
      const SampleDraw draw = sample_member(stream, m);
      report.sampled_index = draw.index;
      report.sample_fallback = draw.fallback;
      const auto idx = static_cast<std::size_t>(draw.index);
      if (track_members) {
        Rat cost(0);
        for (std::size_t s = 1; s < member_history.size(); ++s) {
          std::vector<int> prev, cur;
          for (int l : member_history[s - 1][idx].leaves)
            prev.push_back(leaf_to_point[l]);
          for (int l : member_history[s][idx].leaves)
            cur.push_back(leaf_to_point[l]);
          std::sort(cur.begin(), cur.end());
          cost += metric_matching(*metric, std::move(prev), cur);
        }
        report.sampled = cost;
      } else {
        // tree modes report the tree cost; with k too large for exact
        // matching the tree cost stands in as a never-contracted bound
        report.sampled = ens->member_cost[idx];
      }
    }
  }
  report.bits_total = stream.bits_consumed();

  switch (config.mode) {
    case RunMode::Fractional:
      report.headline = report.fractional_total;
      break;
    case RunMode::BarelyFractional:
      report.headline = report.deferred_total;
      break;
    case RunMode::BarelyRandom:
    case RunMode::EndToEndGeneralMetric:
      report.headline = *report.sampled;
      break;
    case RunMode::Advice:
      report.headline = *report.advised;
      break;
  }

  if (config.generator == "file") {
    report.trace = *file_trace;
  } else if (end_to_end) {
    report.trace = make_trace(*metric, initial_points, request_points);
  } else {
    std::vector<int> leaf_requests;
    for (int p : request_points) leaf_requests.push_back(tree->leaves()[p]);
    report.trace = make_trace(tree, start, leaf_requests);
  }

  if (horizon <= kOptHorizonLimit) {
    report.opt = opt_flow(report.trace);
    if (*report.opt > 0) report.ratio = report.headline / *report.opt;
  }
  return report;
}

std::string ledger_csv(const RunReport& report) {
  std::ostringstream os;
  os << "step,request,forwarded,fractional,z1,z2,z3,z4,deferred,ensemble,"
        "cum_fractional,cum_deferred,cum_ensemble,bits\n";
  for (const LedgerRow& r : report.rows) {
    os << r.step << ',' << r.request << ',' << (r.forwarded ? 1 : 0) << ','
       << fmt_double(rat_to_double(r.fractional)) << ','
       << fmt_double(rat_to_double(r.z1)) << ','
       << fmt_double(rat_to_double(r.z2)) << ','
       << fmt_double(rat_to_double(r.z3)) << ','
       << fmt_double(rat_to_double(r.z4)) << ','
       << fmt_double(rat_to_double(r.deferred)) << ','
       << fmt_double(rat_to_double(r.ensemble)) << ','
       << fmt_double(rat_to_double(r.cum_fractional)) << ','
       << fmt_double(rat_to_double(r.cum_deferred)) << ','
       << fmt_double(rat_to_double(r.cum_ensemble)) << ',' << r.bits << '\n';
  }
  return os.str();
}

std::string ledger_json(const RunReport& report) {
  ordered_json rows = ordered_json::array();
  for (const LedgerRow& r : report.rows) {
    ordered_json j;
    j["step"] = r.step;
    j["request"] = r.request;
    j["forwarded"] = r.forwarded;
    j["fractional"] = rat_to_string(r.fractional);
    j["z1"] = rat_to_string(r.z1);
    j["z2"] = rat_to_string(r.z2);
    j["z3"] = rat_to_string(r.z3);
    j["z4"] = rat_to_string(r.z4);
    j["deferred"] = rat_to_string(r.deferred);
    j["ensemble"] = rat_to_string(r.ensemble);
    j["cum_fractional"] = rat_to_string(r.cum_fractional);
    j["cum_deferred"] = rat_to_string(r.cum_deferred);
    j["cum_ensemble"] = rat_to_string(r.cum_ensemble);
    j["bits"] = r.bits;
    rows.push_back(std::move(j));
  }
  ordered_json j;
  j["rows"] = std::move(rows);
  return j.dump();
}

std::string summary_json(const RunReport& report) {
  const ExperimentConfig& c = report.config;
  ordered_json j;
  j["mode"] = mode_to_string(c.mode);
  j["k"] = c.k;
  j["m"] = c.effective_m();
  j["tau"] = rat_to_string(c.tau);
  j["seed"] = c.seed;
  j["generator"] = c.generator;
  j["points"] = report.points;
  j["horizon"] = static_cast<long long>(report.rows.size());
  j["forwarded"] = report.forwarded;
  ordered_json totals;
  totals["fractional"] = rat_entry(report.fractional_total);
  totals["deferred"] = rat_entry(report.deferred_total);
  totals["ensemble"] = rat_entry(report.ensemble_total);
  j["totals"] = std::move(totals);
  j["headline"] = rat_entry(report.headline);
  if (report.advised) j["advised"] = rat_entry(*report.advised);
  if (report.sampled) {
    j["sampled"] = rat_entry(*report.sampled);
    ordered_json sample;
    sample["index"] = *report.sampled_index;
    sample["fallback"] = report.sample_fallback;
    j["sample"] = std::move(sample);
  }
  ordered_json bits;
  bits["init"] = report.bits_init;
  bits["total"] = report.bits_total;
  j["bits"] = std::move(bits);
  if (report.opt) j["opt"] = rat_entry(*report.opt);
  if (report.ratio) j["ratio"] = rat_to_double(*report.ratio);
  j["violations"] = report.violations;
  j["violation_notes"] = report.violation_notes;
  return j.dump(2);
}

}  // namespace kserver

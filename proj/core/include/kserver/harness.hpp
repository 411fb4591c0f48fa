#pragma once

// Experiment orchestration: instance and trace construction, pipeline
// execution with exact per-stage cost accounting, and report emission.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kserver/offline.hpp"
#include "kserver/rational.hpp"
#include "kserver/tree.hpp"

namespace kserver {

enum class RunMode {
  Fractional,             // projection chain only, on a native HST
  BarelyFractional,       // + request filter + hysteresis discretization
  BarelyRandom,           // + ensemble rounding + one sampled member
  EndToEndGeneralMetric,  // metric -> random tree embedding -> full chain
  Advice,                 // full chain, best member in hindsight
};

RunMode mode_from_string(const std::string& name);
std::string mode_to_string(RunMode mode);

// Instance/trace sources. Tree modes synthesize a native tau-HST with
// `points` leaves from the seed; the general-metric mode uses a uniform
// metric on `points` (generators "uniform" | "round-robin" | "lazy"),
// the canonical clustered instance ("far-point"), or a trace file.
struct ExperimentConfig {
  RunMode mode = RunMode::BarelyRandom;
  int k = 2;
  long long m = 0;  // 0 = default 2k^2 + k
  Rat tau = Rat(16);
  std::uint64_t seed = 1;
  std::string generator = "uniform";
  int horizon = 100;             // T for generated traces
  int points = 8;                // leaves / metric points
  int round_robin_points = 0;    // 0 = k + 1
  long long far_distance = 64;   // far-point separation
  std::string trace_path;        // generator "file"
  bool audit = false;            // per-step invariant re-checks
  std::string format = "csv";    // ledger format: csv | json

  long long effective_m() const {
    return m > 0 ? m : 2LL * k * k + k;
  }
};

ExperimentConfig config_from_json(const std::string& text);
std::string config_json(const ExperimentConfig& config);

// One request's exact stage costs; cumulative columns are running sums.
struct LedgerRow {
  long long step = 0;   // 1-based
  int request = -1;     // leaf id (tree modes) or metric point (end-to-end)
  bool forwarded = true;
  Rat fractional, z1, z2, z3, z4, deferred, ensemble;
  Rat cum_fractional, cum_deferred, cum_ensemble;
  std::uint64_t bits = 0;  // stream position after the step
};

struct RunReport {
  ExperimentConfig config;
  int points = 0;
  std::vector<LedgerRow> rows;
  long long forwarded = 0;
  Rat fractional_total, deferred_total, ensemble_total;
  std::optional<Rat> advised;        // best member (rounding modes)
  std::optional<Rat> sampled;        // the drawn member's cost
  std::optional<long long> sampled_index;
  bool sample_fallback = false;
  std::uint64_t bits_init = 0;   // consumed before the first request
  std::uint64_t bits_total = 0;  // final stream position
  Rat headline;                  // the mode's cost of record
  std::optional<Rat> opt;        // offline optimum within oracle limits
  std::optional<Rat> ratio;      // headline / opt, absent when opt is 0
  long long violations = 0;      // failed audit assertions (0 expected)
  std::vector<std::string> violation_notes;  // first few, human-readable
  RequestTrace trace;            // offline-oracle view of the instance
};

// The instance + trace a run would use, without executing the pipeline.
// The lazy generator is adaptive, so it falls back to a full run.
RequestTrace generate_trace(const ExperimentConfig& config);

RunReport run_experiment(const ExperimentConfig& config);

// Fixed column order:
// step,request,forwarded,fractional,z1,z2,z3,z4,deferred,ensemble,
// cum_fractional,cum_deferred,cum_ensemble,bits
std::string ledger_csv(const RunReport& report);
std::string ledger_json(const RunReport& report);  // exact rational strings
std::string summary_json(const RunReport& report);

}  // namespace kserver

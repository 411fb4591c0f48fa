// kserver: command-line driver for the k-server pipeline simulator.
//
//   run       execute a configured experiment, emit ledger.csv + summary.json
//   generate  synthesize a request trace and emit it as JSON
//   opt       exact offline optimum of a trace
//   audit     run with every per-step invariant check enabled
//
// Exit codes: 0 success, 1 error, 2 invariant violations detected.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "kserver/error.hpp"
#include "kserver/harness.hpp"
#include "kserver/offline.hpp"
#include "kserver/rational.hpp"

namespace fs = std::filesystem;

namespace {

struct FlagSet {
  std::string config_path;
  std::uint64_t seed = 0;
  std::string mode;
  long long k = 0;
  long long m = 0;
  std::string tau;
  std::string trace;
  std::string out;
  bool audit = false;
  std::string format;

  CLI::Option* o_config = nullptr;
  CLI::Option* o_seed = nullptr;
  CLI::Option* o_mode = nullptr;
  CLI::Option* o_k = nullptr;
  CLI::Option* o_m = nullptr;
  CLI::Option* o_tau = nullptr;
  CLI::Option* o_trace = nullptr;
  CLI::Option* o_out = nullptr;
  CLI::Option* o_audit = nullptr;
  CLI::Option* o_format = nullptr;
};

void attach_flags(CLI::App& sub, FlagSet& f) {
  f.o_config = sub.add_option("--config", f.config_path,
                              "JSON config file (flags override its fields)");
  f.o_seed = sub.add_option("--seed", f.seed, "random seed");
  f.o_mode = sub.add_option(
      "--mode", f.mode,
      "fractional | barely-fractional | barely-random | end-to-end | advice");
  f.o_k = sub.add_option("--k", f.k, "number of servers");
  f.o_m = sub.add_option("--m", f.m, "ensemble size (default 2k^2+k)");
  f.o_tau = sub.add_option("--tau", f.tau,
                           "tree separation parameter, rational (default 16)");
  f.o_trace = sub.add_option("--trace", f.trace,
                             "request trace file (selects the file generator)");
  f.o_out = sub.add_option("--out", f.out, "directory for report files");
  f.o_audit =
      sub.add_flag("--audit", f.audit, "check every invariant at every step");
  f.o_format =
      sub.add_option("--format", f.format, "ledger file format: csv | json");
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw kserver::Error("IoError", "cannot read " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return text.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  out.flush();
  if (!out)
    throw kserver::Error("IoError", "cannot write " + path.string());
}

kserver::ExperimentConfig build_config(const FlagSet& f) {
  kserver::ExperimentConfig cfg;
  if (f.o_config->count())
    cfg = kserver::config_from_json(read_file(f.config_path));
  if (f.o_seed->count()) cfg.seed = f.seed;
  if (f.o_mode->count()) cfg.mode = kserver::mode_from_string(f.mode);
  if (f.o_k->count()) cfg.k = static_cast<int>(f.k);
  if (f.o_m->count()) cfg.m = f.m;
  if (f.o_tau->count()) cfg.tau = kserver::rat_from_string(f.tau);
  if (f.o_trace->count()) {
    cfg.trace_path = f.trace;
    cfg.generator = "file";
  }
  if (f.o_audit->count()) cfg.audit = true;
  if (f.o_format->count()) cfg.format = f.format;
  return cfg;
}

int cmd_run(kserver::ExperimentConfig cfg, const std::string& out_dir) {
  const kserver::RunReport report = kserver::run_experiment(cfg);
  const nlohmann::json summary = kserver::summary_json(report);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    const fs::path dir(out_dir);
    write_file(dir / "ledger.csv", kserver::ledger_csv(report));
    if (report.config.format == "json")
      write_file(dir / "ledger.json",
                 kserver::ledger_json(report).dump(2) + "\n");
    write_file(dir / "summary.json", summary.dump(2) + "\n");
  }
  std::cout << summary.dump(2) << "\n";
  if (report.violations > 0) {
    std::cerr << "invariant violations: " << report.violations << "\n";
    for (const std::string& note : report.violation_notes)
      std::cerr << "  " << note << "\n";
    return 2;
  }
  return 0;
}

int cmd_generate(const kserver::ExperimentConfig& cfg,
                 const std::string& out_dir) {
  const std::string text = kserver::trace_json(kserver::generate_trace(cfg));
  if (out_dir.empty()) {
    std::cout << text << "\n";
  } else {
    fs::create_directories(out_dir);
    const fs::path path = fs::path(out_dir) / "trace.json";
    write_file(path, text + "\n");
    std::cout << path.string() << "\n";
  }
  return 0;
}

int cmd_opt(const kserver::ExperimentConfig& cfg, const FlagSet& f) {
  const kserver::RequestTrace trace =
      f.o_trace->count() ? kserver::trace_from_json(read_file(f.trace))
                         : kserver::generate_trace(cfg);
  const kserver::Rat value = kserver::opt_flow(trace);
  nlohmann::ordered_json j;
  j["points"] = trace.n;
  j["k"] = trace.k();
  j["horizon"] = trace.horizon();
  j["opt"] = {{"exact", kserver::rat_to_string(value)},
              {"value", kserver::rat_to_double(value)}};
  if (!f.out.empty()) {
    fs::create_directories(f.out);
    write_file(fs::path(f.out) / "opt.json", j.dump(2) + "\n");
  }
  std::cout << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"k-server pipeline simulator"};
  app.require_subcommand(1);

  CLI::App* run = app.add_subcommand(
      "run", "execute an experiment and emit ledger + summary");
  CLI::App* generate =
      app.add_subcommand("generate", "synthesize a request trace");
  CLI::App* opt =
      app.add_subcommand("opt", "exact offline optimum of a trace");
  CLI::App* audit = app.add_subcommand(
      "audit", "run with every per-step invariant check enabled");

  FlagSet f_run, f_generate, f_opt, f_audit;
  attach_flags(*run, f_run);
  attach_flags(*generate, f_generate);
  attach_flags(*opt, f_opt);
  attach_flags(*audit, f_audit);

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(build_config(f_run), f_run.out);
    if (generate->parsed())
      return cmd_generate(build_config(f_generate), f_generate.out);
    if (opt->parsed()) return cmd_opt(build_config(f_opt), f_opt);
    if (audit->parsed()) {
      kserver::ExperimentConfig cfg = build_config(f_audit);
      cfg.audit = true;
      return cmd_run(cfg, f_audit.out);
    }
  } catch (const kserver::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

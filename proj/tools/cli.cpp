#include "cli.hpp"

#include "smcdesign/bench.hpp"
#include "smcdesign/config.hpp"

#include <CLI11.hpp>
#include <omp.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>

namespace smcdesign {

namespace {

struct Overrides {
  std::string config;
  std::uint64_t seed = 0;
  int trials = 0;
  int threads = 0;
  std::string out_dir = "out";
  CLI::Option* seed_opt = nullptr;
  CLI::Option* trials_opt = nullptr;
  CLI::Option* threads_opt = nullptr;
};

void add_common(CLI::App* cmd, Overrides& o, bool with_trials) {
  cmd->add_option("--config", o.config, "JSON configuration file")->required();
  o.seed_opt = cmd->add_option("--seed", o.seed, "Override the base seed");
  if (with_trials) {
    o.trials_opt = cmd->add_option("--trials", o.trials, "Override the number of trials")
                       ->check(CLI::PositiveNumber);
  }
  cmd->add_option("--out-dir", o.out_dir, "Output directory")->capture_default_str();
  o.threads_opt = cmd->add_option("--threads", o.threads, "Worker threads")
                      ->check(CLI::PositiveNumber);
}

BenchmarkConfig load_with_overrides(const Overrides& o) {
  BenchmarkConfig cfg = load_config(o.config);
  if (o.seed_opt && o.seed_opt->count()) cfg.base_seed = o.seed;
  if (o.trials_opt && o.trials_opt->count()) cfg.n_trials = o.trials;
  if (o.threads_opt && o.threads_opt->count()) cfg.threads = o.threads;
  omp_set_num_threads(cfg.threads);
  return cfg;
}

std::ofstream open_file(const std::filesystem::path& path) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  return os;
}

int do_run(const Overrides& o, std::ostream& out) {
  const BenchmarkConfig cfg = load_with_overrides(o);
  const BenchmarkResult result = run_benchmark(cfg);
  write_benchmark_csvs(result, cfg, o.out_dir);
  const auto collapsed = std::count_if(result.records.begin(), result.records.end(),
                                       [](const TrialRecord& r) { return r.collapsed; });
  out << "trials: " << cfg.n_trials << " (collapsed: " << collapsed << ")\n";
  if (!result.summary.empty()) {
    const SummaryRow& last = result.summary.back();
    out << "N=" << last.n << " mean_loss=" << format_double(last.mean_loss)
        << " median_loss=" << format_double(last.median_loss) << '\n';
  }
  out << "wrote " << (std::filesystem::path(o.out_dir) / "summary.csv").string() << '\n';
  return 0;
}

int do_bcrb(const Overrides& o, std::ostream& out) {
  const BenchmarkConfig cfg = load_with_overrides(o);
  const auto rows = bcrb_schedule(cfg);
  const auto path = std::filesystem::path(o.out_dir) / "bcrb.csv";
  auto os = open_file(path);
  write_bcrb_csv(os, rows, make_model(cfg.model)->descriptor().parameter_names);
  if (!os) throw std::runtime_error("write failed: " + path.string());
  out << "wrote " << path.string() << '\n';
  return 0;
}

int do_inspect(const Overrides& o, int trial, int every, std::ostream& out) {
  const BenchmarkConfig cfg = load_with_overrides(o);
  const auto names = make_model(cfg.model)->descriptor().parameter_names;
  const std::filesystem::path dir(o.out_dir);
  int written = 0;
  const TrialRecord rec = run_trial(cfg, trial, [&](int n, const ParticleCloud& cloud) {
    if (n % every != 0 && n != cfg.n_experiments) return;
    char name[32];
    std::snprintf(name, sizeof name, "snapshot_%05d.csv", n);
    const auto path = dir / "snapshots" / name;
    auto os = open_file(path);
    write_snapshot(os, cloud, names);
    if (!os) throw std::runtime_error("write failed: " + path.string());
    ++written;
  });
  const auto path = dir / "trial.csv";
  auto os = open_file(path);
  write_trials_csv(os, {rec});
  if (!os) throw std::runtime_error("write failed: " + path.string());
  out << "trial " << trial << " seed " << rec.seed << ": " << written << " snapshots";
  if (rec.collapsed) out << " (collapsed: " << rec.collapse_message << ")";
  out << "\nwrote " << path.string() << '\n';
  return 0;
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app("Sequential Monte Carlo adaptive experiment design simulator", "smcdesign");
  app.require_subcommand(1);

  Overrides run_opts, bcrb_opts, inspect_opts;
  int trial = 0;
  int every = 1;
  CLI::App* run = app.add_subcommand("run", "Run a multi-trial benchmark and write CSVs");
  add_common(run, run_opts, true);
  CLI::App* bcrb = app.add_subcommand("bcrb", "Bayesian Cramer-Rao bound along the heuristic schedule");
  add_common(bcrb, bcrb_opts, false);
  CLI::App* inspect = app.add_subcommand("inspect", "Dump particle cloud snapshots of one trial");
  add_common(inspect, inspect_opts, false);
  inspect->add_option("--trial", trial, "Trial id")->check(CLI::NonNegativeNumber);
  inspect->add_option("--every", every, "Snapshot every k experiments")->check(CLI::PositiveNumber);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (run->parsed()) return do_run(run_opts, out);
    if (bcrb->parsed()) return do_bcrb(bcrb_opts, out);
    return do_inspect(inspect_opts, trial, every, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

int cli_main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return cli_main(args, std::cout, std::cerr);
}

}  // namespace smcdesign

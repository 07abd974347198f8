#ifndef SMCDESIGN_BENCH_HPP_
#define SMCDESIGN_BENCH_HPP_

#include "smcdesign/design.hpp"
#include "smcdesign/model.hpp"
#include "smcdesign/smc.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace smcdesign {

// Where each trial's true parameters come from.
struct TruthSpec {
  enum class Kind { prior, gaussian, fixed };
  Kind kind = Kind::prior;
  GaussianPrior gaussian;  // Kind::gaussian
  Vector values;           // Kind::fixed
};

// Which distribution the Bayesian information is averaged over at each step.
enum class BcrbMode { posterior, initial_prior, off };
BcrbMode parse_bcrb_mode(std::string_view s);
std::string_view to_string(BcrbMode m);

struct BenchmarkConfig {
  ModelSpec model;
  GaussianPrior prior;
  TruthSpec truth;
  Eigen::Index n_particles = 1000;
  int n_experiments = 100;
  int n_trials = 1;
  DesignConfig design;
  ResampleConfig resample;
  Matrix q;  // empty -> identity
  std::uint64_t base_seed = 0;
  double region_z = 3.0;
  BcrbMode bcrb_mode = BcrbMode::posterior;
  int threads = 1;

  // Throws std::invalid_argument on inconsistent settings.
  void validate() const;
  ScaleMatrix scale_matrix() const;
};

struct TrialRow {
  int n = 0;                                // experiments performed so far
  std::optional<double> chosen_time;        // absent for n = 0
  std::optional<unsigned> outcome;          // absent for n = 0
  double loss_q = 0.0;
  double posterior_var_trace_q = 0.0;
  std::optional<double> bcrb_trace_q;
  double region_mass = 0.0;
  double region_volume = 0.0;
  std::uint64_t likelihood_calls = 0;       // estimator calls, cumulative
};

struct TrialRecord {
  int trial_id = 0;
  std::uint64_t seed = 0;
  Vector true_params;
  std::vector<TrialRow> rows;  // rows[k].n == k
  bool collapsed = false;
  std::string collapse_message;
};

// Seed of trial `trial_id`: derive_seed(base_seed, trial_id) (SplitMix64
// mixing, see types.hpp).
std::uint64_t trial_seed(std::uint64_t base_seed, int trial_id);

// Runs one trial. Draw order on the trial stream: true parameters, initial
// cloud, then per experiment as documented on estimate_adaptive. A posterior
// collapse truncates the record and sets `collapsed`.
TrialRecord run_trial(const BenchmarkConfig& cfg, int trial_id);

// Optional per-experiment hook for diagnostics (cloud after the update).
using TrialCloudHook = std::function<void(int n, const ParticleCloud&)>;
TrialRecord run_trial(const BenchmarkConfig& cfg, int trial_id, const TrialCloudHook& hook);

struct SummaryRow {
  int n = 0;
  int n_trials = 0;  // non-collapsed trials contributing
  double mean_loss = 0.0;
  double stderr_loss = 0.0;
  double median_loss = 0.0;
  double q84_loss = 0.0;
  double band_lo_16 = 0.0;
  double band_hi_84 = 0.0;
  double mean_posterior_var = 0.0;
  double stderr_posterior_var = 0.0;
  std::optional<double> mean_bcrb;
  std::optional<double> stderr_bcrb;
  double mean_region_mass = 0.0;
  double mean_region_volume = 0.0;
  double mean_likelihood_calls = 0.0;
  int n_collapsed = 0;
};

// Linear interpolation between order statistics at position p * (m - 1).
double percentile(std::vector<double> values, double p);

// Per-N summary over non-collapsed trials.
std::vector<SummaryRow> aggregate(const std::vector<TrialRecord>& records);

struct BenchmarkResult {
  std::vector<TrialRecord> records;  // ordered by trial_id
  std::vector<SummaryRow> summary;
};

// Runs cfg.n_trials trials on cfg.threads worker threads. Records are merged by
// trial_id, so the output does not depend on the thread count.
BenchmarkResult run_benchmark(const BenchmarkConfig& cfg);

// Writes trials.csv, summary.csv, cost.csv and regions.csv into out_dir.
// Throws std::runtime_error naming the path on I/O failure.
void write_benchmark_csvs(const BenchmarkResult& result, const BenchmarkConfig& cfg,
                          const std::filesystem::path& out_dir);

void write_trials_csv(std::ostream& os, const std::vector<TrialRecord>& records);
void write_summary_csv(std::ostream& os, const std::vector<SummaryRow>& summary);
void write_cost_csv(std::ostream& os, const std::vector<SummaryRow>& summary);
void write_regions_csv(std::ostream& os, const std::vector<SummaryRow>& summary, int dimension,
                       double z);

struct BcrbScheduleRow {
  int n = 0;
  std::optional<double> time;
  std::optional<double> bcrb_trace_q;
  Vector bound_diagonal;  // empty while the bound is absent
};

// Bound-only computation: Bayesian information averaged over a prior cloud
// along the heuristic schedule (guess 0 of each experiment), no data.
std::vector<BcrbScheduleRow> bcrb_schedule(const BenchmarkConfig& cfg);
void write_bcrb_csv(std::ostream& os, const std::vector<BcrbScheduleRow>& rows,
                    const std::vector<std::string>& parameter_names);

// Shortest round-trip decimal representation ('.' decimal point).
std::string format_double(double v);

}  // namespace smcdesign

#endif  // SMCDESIGN_BENCH_HPP_

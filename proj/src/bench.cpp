#include "smcdesign/bench.hpp"

#include "smcdesign/crb.hpp"
#include "smcdesign/region.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <ostream>

namespace smcdesign {

namespace {

// Substream tags under the trial seed / base seed.
constexpr std::uint64_t kGuessStream = 0x6775657373ULL;
constexpr std::uint64_t kScheduleCloudStream = 0x636c6f7564ULL;
constexpr std::uint64_t kScheduleGuessStream = 0x7363686564ULL;

PriorSampler gaussian_sampler(const GaussianPrior& prior) {
  auto sampler = std::make_shared<NormalSampler>(prior.mean, prior.covariance);
  return [sampler](Rng& rng) { return (*sampler)(rng); };
}

Vector draw_truth(const BenchmarkConfig& cfg, const Model& model, Rng& rng) {
  if (cfg.truth.kind == TruthSpec::Kind::fixed) return cfg.truth.values;
  const GaussianPrior& g =
      cfg.truth.kind == TruthSpec::Kind::prior ? cfg.prior : cfg.truth.gaussian;
  NormalSampler sampler(g.mean, g.covariance);
  for (int attempt = 0; attempt < kMaxPriorRetries; ++attempt) {
    Vector x = sampler(rng);
    if (model.in_domain(as_span(x))) return x;
  }
  throw std::runtime_error("true-parameter distribution keeps producing parameters outside the "
                           "domain of " + model.id());
}

struct CloudStats {
  double loss = 0.0;
  double var_trace = 0.0;
  double mass = 0.0;
  double volume = 0.0;
};

CloudStats cloud_stats(const ParticleCloud& cloud, const Vector& truth, const ScaleMatrix& q,
                       double z) {
  CloudStats s;
  const Vector m = mean(cloud);
  const Matrix c = cov(cloud);
  s.loss = q.loss(truth, m);
  s.var_trace = q.trace_with(c);
  const RegionEstimate region(m, c, z);
  s.mass = region_mass(cloud, region);
  s.volume = region_volume(region);
  return s;
}

std::optional<double> bound_trace(const InfoMatrix& j, const ScaleMatrix& q) {
  const auto inv = information_inverse(j.j);
  if (!inv) return std::nullopt;
  return q.trace_with(*inv);
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double stderr_of(const std::vector<double>& v) {
  const std::size_t m = v.size();
  if (m < 2) return 0.0;
  const double mu = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - mu) * (x - mu);
  return std::sqrt(ss / static_cast<double>(m - 1) / static_cast<double>(m));
}

std::string opt(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  return os;
}

void finish(std::ofstream& os, const std::filesystem::path& path) {
  os.flush();
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace

BcrbMode parse_bcrb_mode(std::string_view s) {
  if (s == "posterior") return BcrbMode::posterior;
  if (s == "initial_prior") return BcrbMode::initial_prior;
  if (s == "off") return BcrbMode::off;
  throw std::invalid_argument("unknown bcrb mode '" + std::string(s) +
                              "'; valid: posterior initial_prior off");
}

std::string_view to_string(BcrbMode m) {
  switch (m) {
    case BcrbMode::posterior: return "posterior";
    case BcrbMode::initial_prior: return "initial_prior";
    case BcrbMode::off: return "off";
  }
  return "?";
}

void BenchmarkConfig::validate() const {
  const auto m = make_model(model);
  const Eigen::Index d = m->dimension();
  prior.validate();
  if (prior.mean.size() != d) {
    throw std::invalid_argument("prior dimension " + std::to_string(prior.mean.size()) +
                                " does not match model " + m->id() + " (" + std::to_string(d) + ")");
  }
  switch (truth.kind) {
    case TruthSpec::Kind::prior: break;
    case TruthSpec::Kind::gaussian:
      truth.gaussian.validate();
      if (truth.gaussian.mean.size() != d) {
        throw std::invalid_argument("true-parameter distribution has the wrong dimension");
      }
      break;
    case TruthSpec::Kind::fixed: m->validate(as_span(truth.values)); break;
  }
  if (n_particles < 1) throw std::invalid_argument("n_particles must be >= 1");
  if (n_experiments < 0) throw std::invalid_argument("n_experiments must be >= 0");
  if (n_trials < 1) throw std::invalid_argument("n_trials must be >= 1");
  design.validate(n_particles);
  resample.validate();
  if (scale_matrix().dimension() != d) throw std::invalid_argument("Q has the wrong dimension");
  if (!(region_z > 0.0) || !std::isfinite(region_z)) {
    throw std::invalid_argument("region_z must be > 0");
  }
  if (threads < 1) throw std::invalid_argument("threads must be >= 1");
}

ScaleMatrix BenchmarkConfig::scale_matrix() const {
  if (q.size() == 0) return ScaleMatrix::identity(prior.mean.size());
  return ScaleMatrix(q);
}

std::uint64_t trial_seed(std::uint64_t base_seed, int trial_id) {
  return derive_seed(base_seed, static_cast<std::uint64_t>(trial_id));
}

TrialRecord run_trial(const BenchmarkConfig& cfg, int trial_id) {
  return run_trial(cfg, trial_id, {});
}

TrialRecord run_trial(const BenchmarkConfig& cfg, int trial_id, const TrialCloudHook& hook) {
  cfg.validate();
  // The estimator's model is the one whose calls are reported; outcome
  // simulation and the bound use their own instances.
  const auto estimator = make_model(cfg.model);
  const auto world = estimator->clone();
  const auto bound_model = estimator->clone();
  const ScaleMatrix q = cfg.scale_matrix();

  TrialRecord rec;
  rec.trial_id = trial_id;
  rec.seed = trial_seed(cfg.base_seed, trial_id);
  Rng rng(rec.seed);
  rec.true_params = draw_truth(cfg, *estimator, rng);
  ParticleCloud cloud = init_cloud(*estimator, cfg.n_particles, gaussian_sampler(cfg.prior), rng);
  estimator->reset_likelihood_calls();

  InfoMatrix j;
  if (cfg.bcrb_mode != BcrbMode::off) j = prior_info(cfg.prior);
  const ParticleCloud initial = cloud;
  ParticleCloud previous = cloud;

  {
    const CloudStats s = cloud_stats(cloud, rec.true_params, q, cfg.region_z);
    TrialRow row;
    row.loss_q = s.loss;
    row.posterior_var_trace_q = s.var_trace;
    if (cfg.bcrb_mode != BcrbMode::off) row.bcrb_trace_q = bound_trace(j, q);
    row.region_mass = s.mass;
    row.region_volume = s.volume;
    rec.rows.push_back(row);
  }
  if (hook) hook(0, cloud);

  AdaptiveSettings settings;
  settings.design = cfg.design;
  settings.resample = cfg.resample;
  settings.n_experiments = cfg.n_experiments;
  settings.guess_seed = derive_seed(rec.seed, kGuessStream);

  StepObserver observer = [&](const ExperimentStep& step, const ParticleCloud& post) {
    TrialRow row;
    row.n = step.index;
    row.chosen_time = step.control.time();
    row.outcome = step.outcome.value;
    row.likelihood_calls = estimator->likelihood_calls();
    if (cfg.bcrb_mode != BcrbMode::off) {
      const ParticleCloud& over = cfg.bcrb_mode == BcrbMode::posterior ? previous : initial;
      BcrbStep b = bcrb_step(j, *bound_model, over, step.control);
      j = std::move(b.j_next);
      if (b.bound) row.bcrb_trace_q = q.trace_with(*b.bound);
    }
    const CloudStats s = cloud_stats(post, rec.true_params, q, cfg.region_z);
    row.loss_q = s.loss;
    row.posterior_var_trace_q = s.var_trace;
    row.region_mass = s.mass;
    row.region_volume = s.volume;
    rec.rows.push_back(row);
    if (cfg.bcrb_mode == BcrbMode::posterior) previous = post;
    if (hook) hook(step.index, post);
  };

  try {
    estimate_adaptive(*estimator, std::move(cloud), settings, q,
                      simulated_source(*world, rec.true_params), rng, observer);
  } catch (const PosteriorCollapse& e) {
    rec.collapsed = true;
    rec.collapse_message = e.what();
  }
  return rec;
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("percentile: no values");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("percentile: p must be in [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = p * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

std::vector<SummaryRow> aggregate(const std::vector<TrialRecord>& records) {
  if (records.empty()) throw std::invalid_argument("aggregate: no records");
  int n_collapsed = 0;
  std::size_t max_rows = 0;
  for (const auto& r : records) {
    if (r.collapsed) {
      ++n_collapsed;
    } else {
      max_rows = std::max(max_rows, r.rows.size());
    }
  }
  std::vector<SummaryRow> out;
  for (std::size_t k = 0; k < max_rows; ++k) {
    std::vector<double> loss, var, bcrb, mass, volume, calls;
    for (const auto& r : records) {
      if (r.collapsed || r.rows.size() <= k) continue;
      const TrialRow& row = r.rows[k];
      loss.push_back(row.loss_q);
      var.push_back(row.posterior_var_trace_q);
      if (row.bcrb_trace_q) bcrb.push_back(*row.bcrb_trace_q);
      mass.push_back(row.region_mass);
      volume.push_back(row.region_volume);
      calls.push_back(static_cast<double>(row.likelihood_calls));
    }
    if (loss.empty()) continue;
    SummaryRow s;
    s.n = static_cast<int>(k);
    s.n_trials = static_cast<int>(loss.size());
    s.mean_loss = mean_of(loss);
    s.stderr_loss = stderr_of(loss);
    s.median_loss = percentile(loss, 0.5);
    s.q84_loss = percentile(loss, 0.84);
    s.band_lo_16 = percentile(loss, 0.16);
    s.band_hi_84 = s.q84_loss;
    s.mean_posterior_var = mean_of(var);
    s.stderr_posterior_var = stderr_of(var);
    if (!bcrb.empty()) {
      s.mean_bcrb = mean_of(bcrb);
      s.stderr_bcrb = stderr_of(bcrb);
    }
    s.mean_region_mass = mean_of(mass);
    s.mean_region_volume = mean_of(volume);
    s.mean_likelihood_calls = mean_of(calls);
    s.n_collapsed = n_collapsed;
    out.push_back(s);
  }
  return out;
}

BenchmarkResult run_benchmark(const BenchmarkConfig& cfg) {
  cfg.validate();
  BenchmarkResult result;
  result.records.resize(static_cast<std::size_t>(cfg.n_trials));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(cfg.n_trials));
#pragma omp parallel for schedule(dynamic, 1) num_threads(cfg.threads)
  for (int t = 0; t < cfg.n_trials; ++t) {
    try {
      result.records[static_cast<std::size_t>(t)] = run_trial(cfg, t);
    } catch (...) {
      errors[static_cast<std::size_t>(t)] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  result.summary = aggregate(result.records);
  return result;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_trials_csv(std::ostream& os, const std::vector<TrialRecord>& records) {
  os << "trial_id,seed,N,chosen_time,outcome,loss_q,posterior_var_trace_q,bcrb_trace_q,"
        "region_mass,region_volume,likelihood_calls\n";
  for (const auto& r : records) {
    for (const auto& row : r.rows) {
      os << r.trial_id << ',' << r.seed << ',' << row.n << ',' << opt(row.chosen_time) << ',';
      if (row.outcome) os << *row.outcome;
      os << ',' << format_double(row.loss_q) << ',' << format_double(row.posterior_var_trace_q)
         << ',' << opt(row.bcrb_trace_q) << ',' << format_double(row.region_mass) << ','
         << format_double(row.region_volume) << ',' << row.likelihood_calls << '\n';
    }
  }
}

void write_summary_csv(std::ostream& os, const std::vector<SummaryRow>& summary) {
  os << "N,mean_loss,stderr_loss,median_loss,q84_loss,band_lo_16,band_hi_84,mean_posterior_var,"
        "mean_bcrb,n_collapsed\n";
  for (const auto& s : summary) {
    os << s.n << ',' << format_double(s.mean_loss) << ',' << format_double(s.stderr_loss) << ','
       << format_double(s.median_loss) << ',' << format_double(s.q84_loss) << ','
       << format_double(s.band_lo_16) << ',' << format_double(s.band_hi_84) << ','
       << format_double(s.mean_posterior_var) << ',' << opt(s.mean_bcrb) << ',' << s.n_collapsed
       << '\n';
  }
}

void write_cost_csv(std::ostream& os, const std::vector<SummaryRow>& summary) {
  os << "N,mean_likelihood_calls,mean_loss,median_loss,q84_loss\n";
  for (const auto& s : summary) {
    os << s.n << ',' << format_double(s.mean_likelihood_calls) << ','
       << format_double(s.mean_loss) << ',' << format_double(s.median_loss) << ','
       << format_double(s.q84_loss) << '\n';
  }
}

void write_regions_csv(std::ostream& os, const std::vector<SummaryRow>& summary, int dimension,
                       double z) {
  const double expected = expected_normal_mass(dimension, z);
  os << "N,mean_region_mass,expected_normal_mass,mean_region_volume\n";
  for (const auto& s : summary) {
    os << s.n << ',' << format_double(s.mean_region_mass) << ',' << format_double(expected) << ','
       << format_double(s.mean_region_volume) << '\n';
  }
}

void write_benchmark_csvs(const BenchmarkResult& result, const BenchmarkConfig& cfg,
                          const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error("cannot create " + out_dir.string() + ": " + ec.message());
  const auto write = [&](const char* name, const auto& body) {
    const auto path = out_dir / name;
    auto os = open_out(path);
    body(os);
    finish(os, path);
  };
  write("trials.csv", [&](std::ostream& os) { write_trials_csv(os, result.records); });
  write("summary.csv", [&](std::ostream& os) { write_summary_csv(os, result.summary); });
  write("cost.csv", [&](std::ostream& os) { write_cost_csv(os, result.summary); });
  write("regions.csv", [&](std::ostream& os) {
    write_regions_csv(os, result.summary, static_cast<int>(cfg.prior.mean.size()), cfg.region_z);
  });
}

std::vector<BcrbScheduleRow> bcrb_schedule(const BenchmarkConfig& cfg) {
  cfg.validate();
  const auto model = make_model(cfg.model);
  const ScaleMatrix q = cfg.scale_matrix();
  Rng cloud_rng(derive_seed(cfg.base_seed, kScheduleCloudStream));
  const ParticleCloud cloud =
      init_cloud(*model, cfg.n_particles, gaussian_sampler(cfg.prior), cloud_rng);
  const std::uint64_t guess_seed = derive_seed(cfg.base_seed, kScheduleGuessStream);

  std::vector<BcrbScheduleRow> rows;
  InfoMatrix j = prior_info(cfg.prior);
  auto add_row = [&](int n, std::optional<double> time, const std::optional<Matrix>& bound) {
    BcrbScheduleRow row;
    row.n = n;
    row.time = time;
    if (bound) {
      row.bcrb_trace_q = q.trace_with(*bound);
      row.bound_diagonal = bound->diagonal();
    }
    rows.push_back(std::move(row));
  };
  add_row(0, std::nullopt, information_inverse(j.j));
  for (int k = 1; k <= cfg.n_experiments; ++k) {
    Rng guess_rng(derive_seed(derive_seed(guess_seed, static_cast<std::uint64_t>(k)), 0));
    const ExperimentControl c =
        guess_control(cfg.design.heuristic_kind, k, guess_rng, cfg.design.heuristic_params);
    BcrbStep b = bcrb_step(j, *model, cloud, c);
    j = std::move(b.j_next);
    add_row(k, c.time(), b.bound);
  }
  return rows;
}

void write_bcrb_csv(std::ostream& os, const std::vector<BcrbScheduleRow>& rows,
                    const std::vector<std::string>& parameter_names) {
  os << "N,time,bcrb_trace_q";
  for (const auto& name : parameter_names) os << ",bound_" << name;
  os << '\n';
  for (const auto& r : rows) {
    os << r.n << ',' << opt(r.time) << ',' << opt(r.bcrb_trace_q);
    for (std::size_t k = 0; k < parameter_names.size(); ++k) {
      os << ',';
      if (r.bound_diagonal.size() > 0) {
        os << format_double(r.bound_diagonal[static_cast<Eigen::Index>(k)]);
      }
    }
    os << '\n';
  }
}

}  // namespace smcdesign

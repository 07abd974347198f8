#include "smcdesign/design.hpp"

#include "smcdesign/kernels.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <exception>
#include <numbers>
#include <numeric>
#include <random>

namespace smcdesign {

namespace {

std::span<double> mutable_span(Vector& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

// -p ln p, continuously extended to 0 at p = 0.
inline double entropy_term(double p) { return p > 0.0 ? -p * std::log(p) : 0.0; }

template <typename Enum, std::size_t N>
Enum parse_enum(std::string_view s, const std::array<std::pair<std::string_view, Enum>, N>& table,
                const char* what) {
  for (const auto& [name, value] : table) {
    if (name == s) return value;
  }
  std::string msg = std::string("unknown ") + what + " '" + std::string(s) + "'; valid:";
  for (const auto& entry : table) msg += " " + std::string(entry.first);
  throw std::invalid_argument(msg);
}

template <typename Enum, std::size_t N>
std::string_view enum_name(Enum k, const std::array<std::pair<std::string_view, Enum>, N>& table) {
  for (const auto& [name, value] : table) {
    if (value == k) return name;
  }
  return "?";
}

constexpr std::array<std::pair<std::string_view, UtilityKind>, 2> kUtilityNames{{
    {"negative_variance", UtilityKind::negative_variance},
    {"information_gain", UtilityKind::information_gain},
}};
constexpr std::array<std::pair<std::string_view, OptimizerKind>, 2> kOptimizerNames{{
    {"null", OptimizerKind::null},
    {"gradient_local", OptimizerKind::gradient_local},
}};
constexpr std::array<std::pair<std::string_view, HeuristicKind>, 3> kHeuristicNames{{
    {"uniform_linear", HeuristicKind::uniform_linear},
    {"exponential_time", HeuristicKind::exponential_time},
    {"geometric_time", HeuristicKind::geometric_time},
}};
constexpr std::array<std::pair<std::string_view, NvWeighting>, 2> kWeightingNames{{
    {"posterior", NvWeighting::posterior},
    {"pseudocode", NvWeighting::pseudocode},
}};

}  // namespace

UtilityKind parse_utility_kind(std::string_view s) { return parse_enum(s, kUtilityNames, "utility"); }
OptimizerKind parse_optimizer_kind(std::string_view s) {
  return parse_enum(s, kOptimizerNames, "optimizer");
}
HeuristicKind parse_heuristic_kind(std::string_view s) {
  return parse_enum(s, kHeuristicNames, "heuristic");
}
NvWeighting parse_nv_weighting(std::string_view s) {
  return parse_enum(s, kWeightingNames, "nv_weighting");
}
std::string_view to_string(UtilityKind k) { return enum_name(k, kUtilityNames); }
std::string_view to_string(OptimizerKind k) { return enum_name(k, kOptimizerNames); }
std::string_view to_string(HeuristicKind k) { return enum_name(k, kHeuristicNames); }
std::string_view to_string(NvWeighting k) { return enum_name(k, kWeightingNames); }

// ---------------------------------------------------------------------------

ScaleMatrix::ScaleMatrix(Matrix q) : q_(std::move(q)) {
  if (q_.rows() == 0 || q_.rows() != q_.cols()) throw std::invalid_argument("Q must be square");
  if (!q_.allFinite()) throw std::invalid_argument("Q must be finite");
  const double scale = std::max(1.0, q_.cwiseAbs().maxCoeff());
  if ((q_ - q_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw std::invalid_argument("Q must be symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(q_, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -1e-12 * scale) {
    throw std::invalid_argument("Q must be positive semidefinite");
  }
}

double ScaleMatrix::loss(const Vector& x, const Vector& estimate) const {
  const Vector dx = x - estimate;
  return kernels::quadratic_form(q_, dx);
}

double ScaleMatrix::trace_with(const Matrix& sigma) const { return (sigma * q_).trace(); }

void DesignConfig::validate(Eigen::Index n_particles) const {
  if (n_guesses < 1) throw std::invalid_argument("n_guesses must be >= 1");
  if (!(approx_ratio > 0.0 && approx_ratio <= 1.0)) {
    throw std::invalid_argument("approx_ratio must be in (0, 1]");
  }
  if (std::floor(static_cast<double>(n_particles) * approx_ratio) < 1.0) {
    throw std::invalid_argument("approx_ratio * n_particles must keep at least one particle");
  }
  if (!(heuristic_params.scale > 0.0) || !std::isfinite(heuristic_params.scale)) {
    throw std::invalid_argument("heuristic scale must be positive");
  }
}

// ---------------------------------------------------------------------------

double util_nv(const ParticleCloud& cloud, const Model& model, const ExperimentControl& c,
               const ScaleMatrix& q, NvWeighting weighting) {
  if (q.dimension() != cloud.dimension()) throw std::invalid_argument("util_nv: Q size mismatch");
  const Eigen::Index n = cloud.size();
  const double total = cloud.total_weight();
  Vector p0(n), p1(n);
  model.outcome_likelihoods(cloud.locations(), c, mutable_span(p0), mutable_span(p1));

  const auto w = cloud.weight_span();
  Vector joint(n);
  double u = 0.0;
  for (const Vector* lik : {&p0, &p1}) {
    const double marginal = kernels::parallel::reweight(w, as_span(*lik), mutable_span(joint));
    if (!(marginal > 0.0)) continue;
    const Vector posterior = joint / marginal;
    const Vector mu = kernels::parallel::weighted_mean(as_span(posterior), cloud.locations());
    double spread;
    if (weighting == NvWeighting::posterior) {
      spread = kernels::parallel::weighted_quadratic_spread(as_span(posterior), cloud.locations(),
                                                            mu, q.matrix());
    } else {
      spread = kernels::parallel::weighted_quadratic_spread(w, cloud.locations(), mu, q.matrix()) /
               total;
    }
    u -= (marginal / total) * spread;
  }
  return std::min(u, 0.0);
}

double util_ig(const ParticleCloud& cloud, const Model& model, const ExperimentControl& c) {
  const Eigen::Index n = cloud.size();
  const double total = cloud.total_weight();
  Vector p0(n), p1(n);
  model.outcome_likelihoods(cloud.locations(), c, mutable_span(p0), mutable_span(p1));

  const auto w = cloud.weight_span();
  Vector scratch(n);
  const double m0 = kernels::parallel::reweight(w, as_span(p0), mutable_span(scratch)) / total;
  const double m1 = kernels::parallel::reweight(w, as_span(p1), mutable_span(scratch)) / total;
  const double marginal_entropy = entropy_term(m0) + entropy_term(m1);

  Vector entropy(n);
  for (Eigen::Index i = 0; i < n; ++i) entropy[i] = entropy_term(p0[i]) + entropy_term(p1[i]);
  const double conditional_entropy =
      kernels::parallel::reweight(w, as_span(entropy), mutable_span(scratch)) / total;
  return std::max(0.0, marginal_entropy - conditional_entropy);
}

// ---------------------------------------------------------------------------

ParticleCloud reapprox(const ParticleCloud& cloud, double approx_ratio, Rng& rng,
                       bool renormalize) {
  const Eigen::Index n = cloud.size();
  const auto kept = static_cast<Eigen::Index>(std::floor(static_cast<double>(n) * approx_ratio));
  if (!(approx_ratio > 0.0 && approx_ratio <= 1.0) || kept < 1) {
    throw std::invalid_argument("reapprox: floor(n * approx_ratio) must be >= 1");
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::shuffle(order.begin(), order.end(), rng);
  const auto& w = cloud.weights();
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return w[a] > w[b]; });

  Vector weights(kept);
  Matrix locations(cloud.dimension(), kept);
  for (Eigen::Index i = 0; i < kept; ++i) {
    const Eigen::Index src = order[static_cast<std::size_t>(i)];
    weights[i] = w[src];
    locations.col(i) = cloud.locations().col(src);
  }
  if (renormalize) {
    const double total = weights.sum();
    if (total > 0.0) {
      weights /= total;
    } else {
      weights.setConstant(1.0 / static_cast<double>(kept));
    }
  }
  return ParticleCloud(std::move(weights), std::move(locations));
}

ExperimentControl guess_control(HeuristicKind kind, int k, Rng& rng,
                                const HeuristicParams& params) {
  if (k < 1) throw std::invalid_argument("guess_control: experiment index must be >= 1");
  if (!(params.scale > 0.0) || !std::isfinite(params.scale)) {
    throw std::invalid_argument("guess_control: heuristic scale must be positive");
  }
  switch (kind) {
    case HeuristicKind::uniform_linear:
      return ExperimentControl(2.0 * k * std::numbers::pi / 3.0 * params.scale);
    case HeuristicKind::exponential_time: {
      std::exponential_distribution<double> exp_dist(1.0 / params.scale);
      double t = exp_dist(rng);
      // The exponential can return exactly 0; nudge to the smallest positive
      // time so every guess is a real experiment.
      if (!(t > 0.0)) t = std::numeric_limits<double>::min();
      return ExperimentControl(t);
    }
    case HeuristicKind::geometric_time:
      return ExperimentControl(std::pow(9.0 / 8.0, k) * params.scale);
  }
  throw std::invalid_argument("guess_control: unknown heuristic");
}

// ---------------------------------------------------------------------------

OptimizationResult optimize_local(OptimizerKind kind, const UtilityFn& utility,
                                  const ExperimentControl& c0) {
  const double u0 = utility(c0);
  if (kind == OptimizerKind::null || !(c0.time() > 0.0)) return {c0, u0};
  if (!std::isfinite(u0)) return {c0, u0};

  auto evaluate = [&](double s) -> double {
    try {
      const double t = std::exp(s);
      if (!std::isfinite(t) || !(t > 0.0)) return std::numeric_limits<double>::quiet_NaN();
      return utility(ExperimentControl(t));
    } catch (const std::invalid_argument&) {
      return std::numeric_limits<double>::quiet_NaN();
    }
  };

  double s = std::log(c0.time());
  double u = u0;
  const double h = kLogTimeStep;
  for (int iter = 0; iter < kMaxOptimizerIterations; ++iter) {
    const double up = evaluate(s + h);
    const double um = evaluate(s - h);
    if (!std::isfinite(up) || !std::isfinite(um)) break;
    const double grad = (up - um) / (2.0 * h);
    const double curvature = (up - 2.0 * u + um) / (h * h);
    if (grad == 0.0) break;

    double step = curvature < 0.0 ? -grad / curvature : std::copysign(0.5, grad);
    step = std::clamp(step, -1.0, 1.0);

    bool accepted = false;
    double s_new = s, u_new = u;
    for (int halving = 0; halving < 30; ++halving) {
      s_new = s + step;
      u_new = evaluate(s_new);
      if (std::isfinite(u_new) && u_new > u) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    const double improvement = u_new - u;
    s = s_new;
    u = u_new;
    if (improvement <= kOptimizerRelativeTolerance * std::abs(u)) break;
  }
  if (u > u0) return {ExperimentControl(std::exp(s)), u};
  return {c0, u0};
}

UtilityFn make_utility(const DesignConfig& config, const ParticleCloud& cloud, const Model& model,
                       const ScaleMatrix& q) {
  if (config.utility_kind == UtilityKind::information_gain) {
    return [&cloud, &model](const ExperimentControl& c) { return util_ig(cloud, model, c); };
  }
  const NvWeighting weighting = config.nv_weighting;
  return [&cloud, &model, &q, weighting](const ExperimentControl& c) {
    return util_nv(cloud, model, c, q, weighting);
  };
}

// ---------------------------------------------------------------------------

OutcomeSource simulated_source(const Model& model, Vector true_params) {
  model.validate(as_span(true_params));
  return [&model, x = std::move(true_params)](const ExperimentControl& c, Rng& rng) {
    return simulate_outcome(model, as_span(x), c, rng);
  };
}

AdaptiveResult estimate_adaptive(const Model& model, ParticleCloud cloud,
                                 const AdaptiveSettings& settings, const ScaleMatrix& q,
                                 const OutcomeSource& source, Rng& rng,
                                 const StepObserver& observer) {
  const auto& design = settings.design;
  design.validate(cloud.size());
  settings.resample.validate();
  if (settings.n_experiments < 0) throw std::invalid_argument("n_experiments must be >= 0");
  if (q.dimension() != model.dimension()) throw std::invalid_argument("Q size mismatch");

  AdaptiveResult result;
  result.steps.reserve(static_cast<std::size_t>(settings.n_experiments));
  const auto n_guesses = static_cast<std::size_t>(design.n_guesses);
  std::vector<ExperimentControl> best_controls(n_guesses, ExperimentControl(0.0));
  std::vector<double> best_utilities(n_guesses);

  for (int k = 1; k <= settings.n_experiments; ++k) {
    ParticleCloud reduced;
    const bool use_reduced = design.approx_ratio < 1.0;
    if (use_reduced) reduced = reapprox(cloud, design.approx_ratio, rng);
    const ParticleCloud& design_cloud = use_reduced ? reduced : cloud;
    const UtilityFn utility = make_utility(design, design_cloud, model, q);

    const std::uint64_t experiment_seed = derive_seed(settings.guess_seed, static_cast<std::uint64_t>(k));
    std::vector<ExperimentControl> starts;
    starts.reserve(n_guesses);
    for (std::size_t g = 0; g < n_guesses; ++g) {
      Rng guess_rng(derive_seed(experiment_seed, g));
      starts.push_back(guess_control(design.heuristic_kind, k, guess_rng, design.heuristic_params));
    }
    // Optimization is deterministic in its starting point, so repeated guesses
    // (the fixed-schedule heuristics) are optimized once and copied.
    std::vector<std::size_t> first(n_guesses), distinct;
    for (std::size_t g = 0; g < n_guesses; ++g) {
      first[g] = g;
      for (std::size_t h : distinct) {
        if (starts[h] == starts[g]) {
          first[g] = h;
          break;
        }
      }
      if (first[g] == g) distinct.push_back(g);
    }
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
    for (std::size_t u = 0; u < distinct.size(); ++u) {
      const std::size_t g = distinct[u];
      try {
        const OptimizationResult opt = optimize_local(design.optimizer_kind, utility, starts[g]);
        best_controls[g] = opt.control;
        best_utilities[g] = opt.utility;
      } catch (...) {
#pragma omp critical(smcdesign_guess_failure)
        if (!failure) failure = std::current_exception();
      }
    }
    for (std::size_t g = 0; g < n_guesses; ++g) {
      best_controls[g] = best_controls[first[g]];
      best_utilities[g] = best_utilities[first[g]];
    }
    if (failure) std::rethrow_exception(failure);

    // Lowest index wins ties; NaN utilities never win.
    std::size_t best = 0;
    for (std::size_t g = 1; g < n_guesses; ++g) {
      if (best_utilities[g] > best_utilities[best] || std::isnan(best_utilities[best])) best = g;
    }

    ExperimentStep step;
    step.index = k;
    step.control = best_controls[best];
    step.utility = best_utilities[best];
    step.outcome = source(step.control, rng);
    update(cloud, model, step.outcome, step.control);

    const double n = static_cast<double>(cloud.size());
    if (effective_sample_size(cloud) / n < settings.resample.resample_threshold) {
      cloud = resample(cloud, model, settings.resample, rng);
      step.resampled = true;
    }
    result.steps.push_back(step);
    if (observer) observer(step, cloud);
  }
  result.estimate = mean(cloud);
  result.cloud = std::move(cloud);
  return result;
}

AdaptiveResult estimate_adaptive(const Model& model, Eigen::Index n, const PriorSampler& prior,
                                 const AdaptiveSettings& settings, const ScaleMatrix& q,
                                 const OutcomeSource& source, Rng& rng,
                                 const StepObserver& observer) {
  ParticleCloud cloud = init_cloud(model, n, prior, rng);
  return estimate_adaptive(model, std::move(cloud), settings, q, source, rng, observer);
}

}  // namespace smcdesign

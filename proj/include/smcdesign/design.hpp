#ifndef SMCDESIGN_DESIGN_HPP_
#define SMCDESIGN_DESIGN_HPP_

#include "smcdesign/model.hpp"
#include "smcdesign/smc.hpp"

#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace smcdesign {

// PSD matrix Q of the quadratic loss (x - x')^T Q (x - x').
class ScaleMatrix {
 public:
  // Throws std::invalid_argument unless q is square, symmetric to 1e-12 and
  // has no negative eigenvalues.
  explicit ScaleMatrix(Matrix q);
  static ScaleMatrix identity(Eigen::Index d) { return ScaleMatrix(Matrix::Identity(d, d)); }

  const Matrix& matrix() const { return q_; }
  Eigen::Index dimension() const { return q_.rows(); }
  double loss(const Vector& x, const Vector& estimate) const;
  // Tr(Sigma Q)
  double trace_with(const Matrix& sigma) const;

 private:
  Matrix q_;
};

enum class UtilityKind { negative_variance, information_gain };
enum class OptimizerKind { null, gradient_local };
enum class HeuristicKind { uniform_linear, exponential_time, geometric_time };

// Which weights enter the spread term of the negative-variance utility.
//   posterior:   hypothetical posterior weights w'_i (expected posterior
//                variance; the default).
//   pseudocode:  the pre-update weights w_i around the hypothetical posterior
//                mean, as written in the published pseudocode.
enum class NvWeighting { posterior, pseudocode };

UtilityKind parse_utility_kind(std::string_view s);
OptimizerKind parse_optimizer_kind(std::string_view s);
HeuristicKind parse_heuristic_kind(std::string_view s);
NvWeighting parse_nv_weighting(std::string_view s);
std::string_view to_string(UtilityKind k);
std::string_view to_string(OptimizerKind k);
std::string_view to_string(HeuristicKind k);
std::string_view to_string(NvWeighting k);

struct HeuristicParams {
  // uniform_linear: t = 2 k pi / 3 * scale; exponential_time: mean time;
  // geometric_time: t = (9/8)^k * scale.
  double scale = 1.0;
};

struct DesignConfig {
  int n_guesses = 1;
  double approx_ratio = 1.0;
  UtilityKind utility_kind = UtilityKind::negative_variance;
  OptimizerKind optimizer_kind = OptimizerKind::null;
  HeuristicKind heuristic_kind = HeuristicKind::uniform_linear;
  HeuristicParams heuristic_params;
  NvWeighting nv_weighting = NvWeighting::posterior;

  // Throws std::invalid_argument if any field is out of range, including
  // floor(approx_ratio * n_particles) < 1.
  void validate(Eigen::Index n_particles) const;
};

// Negative expected posterior quadratic spread, sum_D Pr(D|c) * u_D. Always
// <= 0. Likelihoods are evaluated once per (outcome, particle) and shared by
// the marginal and the hypothetical update: +n_outcomes * n calls.
double util_nv(const ParticleCloud& cloud, const Model& model, const ExperimentControl& c,
               const ScaleMatrix& q, NvWeighting weighting = NvWeighting::posterior);

// Mutual information between the next outcome and the parameters, in nats.
// Always >= 0. +n_outcomes * n calls.
double util_ig(const ParticleCloud& cloud, const Model& model, const ExperimentControl& c);

// Keeps the floor(n * approx_ratio) highest-weight particles, choosing among
// ties at random (uniform permutation before a stable sort).
ParticleCloud reapprox(const ParticleCloud& cloud, double approx_ratio, Rng& rng,
                       bool renormalize = true);

// Heuristic guess for experiment k >= 1. Only exponential_time consumes
// randomness (one exponential variate).
ExperimentControl guess_control(HeuristicKind kind, int k, Rng& rng,
                                const HeuristicParams& params);

using UtilityFn = std::function<double(const ExperimentControl&)>;

struct OptimizationResult {
  ExperimentControl control;
  double utility;
};

inline constexpr int kMaxOptimizerIterations = 50;
inline constexpr double kOptimizerRelativeTolerance = 1e-6;
inline constexpr double kLogTimeStep = 1e-4;

// Local ascent from c0. null returns (c0, utility(c0)); gradient_local runs
// safeguarded Newton ascent on s = log t with central finite differences of
// step kLogTimeStep, and never returns a point worse than c0.
OptimizationResult optimize_local(OptimizerKind kind, const UtilityFn& utility,
                                  const ExperimentControl& c0);

// The utility configured in `config`, bound to a (frozen) cloud.
UtilityFn make_utility(const DesignConfig& config, const ParticleCloud& cloud, const Model& model,
                       const ScaleMatrix& q);

struct ExperimentStep {
  int index = 0;  // 1-based experiment number
  ExperimentControl control{0.0};
  Outcome outcome;
  double utility = 0.0;
  bool resampled = false;
};

using OutcomeSource = std::function<Outcome(const ExperimentControl&, Rng&)>;
// Called after each experiment's update (and resampling, if any).
using StepObserver = std::function<void(const ExperimentStep&, const ParticleCloud&)>;

struct AdaptiveResult {
  Vector estimate;
  ParticleCloud cloud;
  std::vector<ExperimentStep> steps;
};

struct AdaptiveSettings {
  DesignConfig design;
  ResampleConfig resample;
  int n_experiments = 0;
  // Seed from which the per-(experiment, guess) substreams are derived.
  std::uint64_t guess_seed = 0;
};

// Per-experiment draw order on `rng`: reapprox permutation (approx_ratio < 1
// only), outcome (via `source`), Liu-West resampling (when triggered).
// Guesses draw from substream derive_seed(derive_seed(guess_seed, k), g), so
// evaluating the guesses in parallel or serially selects the same control.
// Guesses with identical starting controls are optimized once.
//
// Posterior collapse propagates as PosteriorCollapse.
AdaptiveResult estimate_adaptive(const Model& model, ParticleCloud cloud,
                                 const AdaptiveSettings& settings, const ScaleMatrix& q,
                                 const OutcomeSource& source, Rng& rng,
                                 const StepObserver& observer = {});

// Convenience overload: draws the initial n-particle cloud from `prior` on
// `rng` first.
AdaptiveResult estimate_adaptive(const Model& model, Eigen::Index n, const PriorSampler& prior,
                                 const AdaptiveSettings& settings, const ScaleMatrix& q,
                                 const OutcomeSource& source, Rng& rng,
                                 const StepObserver& observer = {});

// Outcome source drawing from `model` at fixed true parameters.
OutcomeSource simulated_source(const Model& model, Vector true_params);

}  // namespace smcdesign

#endif  // SMCDESIGN_DESIGN_HPP_

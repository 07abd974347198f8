#ifndef SMCDESIGN_MODEL_HPP_
#define SMCDESIGN_MODEL_HPP_

#include "smcdesign/types.hpp"

#include <array>
#include <atomic>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace smcdesign {

struct ParameterBounds {
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();

  bool contains(double v) const { return v >= lower && v <= upper; }
};

struct ModelDescriptor {
  std::string id;
  int dimension = 0;
  int n_outcomes = 2;
  std::vector<std::string> parameter_names;
  std::vector<ParameterBounds> parameter_bounds;
};

// Mean and covariance of the intermediate parameters x given hyperparameters
// y, for models whose intermediate distribution has closed-form moments.
struct IntermediateMoments {
  Vector mean;
  Matrix covariance;
};

// Closed-form single-outcome likelihoods. These are the uncounted building
// blocks; everything inside the library goes through Model's counted path.
//
// Pr(0 | omega; t) for a qubit precessing at omega with dephasing time T2.
// `t2` = nullopt means no decay.
double likelihood_known_t2(Outcome d, double omega, double t, std::optional<double> t2);
// x = (omega, Gamma = 1/T2), Gamma >= 0.
double likelihood_unknown_t2(Outcome d, std::span<const double> x, double t);
// y = (mu, sigma^2): omega ~ Normal(mu, sigma^2) marginalized out exactly.
double likelihood_gauss_hyper(Outcome d, std::span<const double> y, double t);
// y = (omega0, gamma): omega ~ Cauchy(omega0, gamma) marginalized out.
double likelihood_lorentz_hyper(Outcome d, std::span<const double> y, double t);

// Likelihood evaluator + parameter-space metadata for one experiment model.
//
// Every counted entry point adds one to the likelihood-call counter per
// (outcome, particle, control) triple it evaluates. The counter is atomic so
// concurrent callers sharing one model instance stay consistent; in practice
// each trial owns its own model instance.
class Model {
 public:
  explicit Model(ModelDescriptor descriptor);
  virtual ~Model() = default;

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelDescriptor& descriptor() const { return descriptor_; }
  int dimension() const { return descriptor_.dimension; }
  int n_outcomes() const { return descriptor_.n_outcomes; }
  const std::string& id() const { return descriptor_.id; }

  // Pr(0 | x; t) without touching the counter. Callers outside the model are
  // expected to use the counted methods below.
  virtual double probability_zero(std::span<const double> x, double t) const = 0;

  // Intermediate-parameter moments for hyperparameter models; nullopt when the
  // model has none (plain models) or they do not exist (Cauchy).
  virtual std::optional<IntermediateMoments> intermediate_moments(
      std::span<const double> y) const;

  // A fresh instance with the same configuration and a zeroed counter.
  virtual std::unique_ptr<Model> clone() const = 0;

  bool in_domain(std::span<const double> x) const;
  // Throws std::invalid_argument if x has the wrong length, a non-finite
  // entry, or violates a constraint.
  void validate(std::span<const double> x) const;

  // Counted evaluation: Pr(d | x; c). +1 call.
  double likelihood(Outcome d, std::span<const double> x, const ExperimentControl& c) const;

  // Counted batch evaluation over particle locations (one particle per
  // column). Writes Pr(d | x_i; c) into `out`. +n calls.
  void likelihoods(Outcome d, const Matrix& locations, const ExperimentControl& c,
                   std::span<double> out) const;

  // Serial variant of likelihoods(), kept as the reference for the parallel
  // batch kernel.
  void likelihoods_serial(Outcome d, const Matrix& locations, const ExperimentControl& c,
                          std::span<double> out) const;

  // Both outcome probabilities (Pr(0|x;c), Pr(1|x;c)) at one point. +2 calls.
  std::array<double, 2> outcome_probabilities(std::span<const double> x,
                                              const ExperimentControl& c) const;

  // All binary outcomes at once: p0[i] = Pr(0|x_i), p1[i] = Pr(1|x_i).
  // +2n calls.
  void outcome_likelihoods(const Matrix& locations, const ExperimentControl& c,
                           std::span<double> p0, std::span<double> p1) const;

  std::uint64_t likelihood_calls() const { return calls_.load(std::memory_order_relaxed); }
  void reset_likelihood_calls() { calls_.store(0, std::memory_order_relaxed); }

 protected:
  void count(std::uint64_t n) const { calls_.fetch_add(n, std::memory_order_relaxed); }
  void check_outcome(Outcome d) const;

 private:
  ModelDescriptor descriptor_;
  mutable std::atomic<std::uint64_t> calls_{0};
};

// Single-parameter Larmor precession with a known dephasing time.
class KnownT2Model final : public Model {
 public:
  // nullopt -> T2 = infinity (no decay).
  explicit KnownT2Model(std::optional<double> t2);

  double probability_zero(std::span<const double> x, double t) const override;
  std::unique_ptr<Model> clone() const override;
  std::optional<double> t2() const { return t2_; }

 private:
  std::optional<double> t2_;
};

// Both omega and Gamma = 1/T2 unknown.
class UnknownT2Model final : public Model {
 public:
  UnknownT2Model();
  double probability_zero(std::span<const double> x, double t) const override;
  std::unique_ptr<Model> clone() const override;
};

// Hyperparameters (mu, sigma^2) of a Gaussian-distributed precession
// frequency.
class GaussHyperModel final : public Model {
 public:
  GaussHyperModel();
  double probability_zero(std::span<const double> x, double t) const override;
  std::optional<IntermediateMoments> intermediate_moments(
      std::span<const double> y) const override;
  std::unique_ptr<Model> clone() const override;
};

// Hyperparameters (omega0, gamma) of a Lorentz-distributed precession
// frequency. The intermediate Cauchy distribution has no moments.
class LorentzHyperModel final : public Model {
 public:
  LorentzHyperModel();
  double probability_zero(std::span<const double> x, double t) const override;
  std::unique_ptr<Model> clone() const override;
};

struct ModelSpec {
  std::string id;                 // known_t2 | unknown_t2 | gauss_hyper | lorentz_hyper
  std::optional<double> t2;       // known_t2 only; nullopt = no decay
};

const std::vector<std::string>& model_ids();
// Throws std::invalid_argument listing the valid ids on an unknown id.
std::unique_ptr<Model> make_model(const ModelSpec& spec);

// Draws d ~ Pr(. | x; c) using exactly one uniform variate from `rng`.
// Counts one likelihood call.
Outcome simulate_outcome(const Model& model, std::span<const double> true_params,
                         const ExperimentControl& c, Rng& rng);

inline std::span<const double> as_span(const Vector& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

}  // namespace smcdesign

#endif  // SMCDESIGN_MODEL_HPP_

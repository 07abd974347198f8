#ifndef SMCDESIGN_SMC_HPP_
#define SMCDESIGN_SMC_HPP_

#include "smcdesign/model.hpp"
#include "smcdesign/types.hpp"

#include <functional>
#include <iosfwd>
#include <stdexcept>

namespace smcdesign {

// Weighted particle approximation of a distribution over model parameters.
//
// Locations are stored one particle per column (d x n) so each particle is
// contiguous. All engine operations leave the weights summing to one.
class ParticleCloud {
 public:
  ParticleCloud() = default;
  // Takes weights and locations as given; throws if sizes disagree, n == 0,
  // or any weight is negative or non-finite. Does not renormalize.
  ParticleCloud(Vector weights, Matrix locations);

  Eigen::Index size() const { return weights_.size(); }
  Eigen::Index dimension() const { return locations_.rows(); }

  const Vector& weights() const { return weights_; }
  const Matrix& locations() const { return locations_; }
  std::span<const double> weight_span() const { return as_span(weights_); }
  std::span<const double> location(Eigen::Index i) const {
    return {locations_.col(i).data(), static_cast<std::size_t>(dimension())};
  }

  // Replaces the weights, keeping locations. Same checks as the constructor.
  void set_weights(Vector weights);

  double total_weight() const;

 private:
  Vector weights_;
  Matrix locations_;
};

// Multivariate normal prior; the only prior family shipped.
struct GaussianPrior {
  Vector mean;
  Matrix covariance;

  // Throws unless dimensions agree and the covariance is symmetric PSD.
  void validate() const;
};

// Draws i.i.d. samples from a multivariate normal. The factorization is done
// once at construction.
class NormalSampler {
 public:
  NormalSampler(Vector mean, const Matrix& covariance);
  Vector operator()(Rng& rng) const;
  // Draws into `out` without allocating.
  void sample_into(Rng& rng, Eigen::Ref<Vector> out) const;

  const Vector& mean() const { return mean_; }

 private:
  Vector mean_;
  Matrix factor_;
};

using PriorSampler = std::function<Vector(Rng&)>;

// Prior draws violating the model constraints are redrawn up to this many
// times before init_cloud gives up.
inline constexpr int kMaxPriorRetries = 1000;

// n particles drawn from `prior`, uniform weights 1/n.
ParticleCloud init_cloud(const Model& model, Eigen::Index n, const PriorSampler& prior, Rng& rng);

Vector mean(const ParticleCloud& cloud);
Matrix cov(const ParticleCloud& cloud);

// sum_i w_i f(x_i). Throws std::domain_error when f returns a non-finite
// value.
double mean_fn(const ParticleCloud& cloud, const std::function<double(std::span<const double>)>& f);
Vector mean_fn(const ParticleCloud& cloud,
               const std::function<Vector(std::span<const double>)>& f);

// Raised by update() when every particle has zero posterior weight.
class PosteriorCollapse : public std::runtime_error {
 public:
  PosteriorCollapse(Outcome outcome, ExperimentControl control);

  Outcome outcome() const { return outcome_; }
  const ExperimentControl& control() const { return control_; }

 private:
  Outcome outcome_;
  ExperimentControl control_;
};

// Bayes update w_i <- w_i Pr(d | x_i; c) / sum_j (...). Locations unchanged.
void update(ParticleCloud& cloud, const Model& model, Outcome d, const ExperimentControl& c);
// Same update through the serial kernels; the reference for update().
void update_serial(ParticleCloud& cloud, const Model& model, Outcome d,
                   const ExperimentControl& c);

double effective_sample_size(const ParticleCloud& cloud);

struct ResampleConfig {
  double a = 0.98;
  double resample_threshold = 0.5;

  void validate() const;
};

// Liu-West resampler: n new particles from the normal mixture
// sum_j w_j N(a x_j + (1-a) mu, (1-a^2) Cov), weights reset to 1/n.
//
// Draw order per new particle: one uniform for the ancestor index, then d
// standard normals; constraint violations redraw the d normals (up to
// kMaxRepairRedraws times) before the location is clamped to the bounds.
inline constexpr int kMaxRepairRedraws = 100;
ParticleCloud resample(const ParticleCloud& cloud, const Model& model,
                       const ResampleConfig& config, Rng& rng);

// Symmetric square-root factor L (L L^T = S + delta I) with
// delta = 1e-12 trace(S)/d. Throws std::domain_error if S is not PSD to
// within the regularization.
Matrix regularized_sqrt_factor(const Matrix& s);

// Writes the snapshot layout: one header line, then one row per particle:
// weight, then that particle's location entries.
void write_snapshot(std::ostream& os, const ParticleCloud& cloud,
                    const std::vector<std::string>& parameter_names);

}  // namespace smcdesign

#endif  // SMCDESIGN_SMC_HPP_

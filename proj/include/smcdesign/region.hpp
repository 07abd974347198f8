#ifndef SMCDESIGN_REGION_HPP_
#define SMCDESIGN_REGION_HPP_

#include "smcdesign/model.hpp"
#include "smcdesign/smc.hpp"

namespace smcdesign {

// Covariance-ellipse credible region
//   { x : (x - mean)^T covariance^{-1} (x - mean) <= z^2 }.
// A singular covariance is handled with a pseudo-inverse on its support, and
// points off the support are outside; `degenerate` records that case.
class RegionEstimate {
 public:
  RegionEstimate(Vector mean, Matrix covariance, double z);

  const Vector& mean() const { return mean_; }
  const Matrix& covariance() const { return covariance_; }
  double z_score() const { return z_; }
  bool degenerate() const { return degenerate_; }
  Eigen::Index dimension() const { return mean_.size(); }

  // Squared Mahalanobis distance; +inf for points off a degenerate support.
  double mahalanobis_sq(std::span<const double> x) const;
  // Inclusive membership test (<= z^2).
  bool contains(std::span<const double> x) const;

 private:
  Vector mean_;
  Matrix covariance_;
  double z_;
  bool degenerate_ = false;
  Matrix whitening_;   // rows span the support, scaled by 1/sqrt(lambda)
  Matrix null_basis_;  // orthonormal basis of the covariance null space
};

RegionEstimate ellipse_region(const ParticleCloud& cloud, double z);

// Particle weight inside the region.
double region_mass(const ParticleCloud& cloud, const RegionEstimate& region);

// erf(z / sqrt 2)^d: the per-axis normal mass convention.
double expected_normal_mass(int d, double z);

// z^d pi^(d/2) / Gamma(d/2 + 1) sqrt(det covariance).
double region_volume(const RegionEstimate& region);

// Region over the intermediate parameters x of a hyperparameter model, from a
// cloud over the hyperparameters y:
//   mean = E_y[E_{x|y}[x]]
//   cov  = E_y[Cov_{x|y}(x)] + Cov_y(E_{x|y}[x]).
// Throws std::invalid_argument for models without closed-form intermediate
// moments (including the Lorentz model).
RegionEstimate hyper_to_param_region(const ParticleCloud& hyper_cloud, const Model& model,
                                     double z);

}  // namespace smcdesign

#endif  // SMCDESIGN_REGION_HPP_

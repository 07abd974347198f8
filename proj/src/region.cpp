#include "smcdesign/region.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace smcdesign {

RegionEstimate::RegionEstimate(Vector mean, Matrix covariance, double z)
    : mean_(std::move(mean)), covariance_(std::move(covariance)), z_(z) {
  const Eigen::Index d = mean_.size();
  if (d == 0 || covariance_.rows() != d || covariance_.cols() != d) {
    throw std::invalid_argument("region: mean/covariance dimension mismatch");
  }
  if (!(z_ > 0.0) || !std::isfinite(z_)) throw std::invalid_argument("region: z must be > 0");
  if (!mean_.allFinite() || !covariance_.allFinite()) {
    throw std::invalid_argument("region: mean/covariance must be finite");
  }
  covariance_ = 0.5 * (covariance_ + covariance_.transpose());

  // Same regularization as the resampler's factorization; eigenvalues at or
  // below the shift are treated as the null space.
  const double delta = 1e-12 * covariance_.trace() / static_cast<double>(d);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(covariance_);
  const Vector& lambda = eig.eigenvalues();
  const double scale = lambda.cwiseAbs().maxCoeff();
  if (lambda.minCoeff() < -1e-10 * scale) {
    throw std::invalid_argument("region: covariance is not positive semidefinite");
  }
  std::vector<Eigen::Index> support, null;
  for (Eigen::Index k = 0; k < d; ++k) {
    (lambda[k] > delta && lambda[k] > 0.0 ? support : null).push_back(k);
  }
  degenerate_ = !null.empty();
  whitening_.resize(static_cast<Eigen::Index>(support.size()), d);
  for (std::size_t r = 0; r < support.size(); ++r) {
    const Eigen::Index k = support[r];
    whitening_.row(static_cast<Eigen::Index>(r)) =
        eig.eigenvectors().col(k).transpose() / std::sqrt(lambda[k]);
  }
  null_basis_.resize(d, static_cast<Eigen::Index>(null.size()));
  for (std::size_t c = 0; c < null.size(); ++c) {
    null_basis_.col(static_cast<Eigen::Index>(c)) = eig.eigenvectors().col(null[c]);
  }
}

double RegionEstimate::mahalanobis_sq(std::span<const double> x) const {
  const Eigen::Index d = dimension();
  if (x.size() != static_cast<std::size_t>(d)) {
    throw std::invalid_argument("region: point dimension mismatch");
  }
  // Called once per particle per experiment; plain loops keep it off the heap.
  if (degenerate_) {
    // Off-support displacement puts the point outside.
    double off = 0.0;
    for (Eigen::Index c = 0; c < null_basis_.cols(); ++c) {
      double proj = 0.0;
      for (Eigen::Index k = 0; k < d; ++k) proj += null_basis_(k, c) * (x[k] - mean_[k]);
      off += proj * proj;
    }
    const double tol = 1e-12 * std::max(1.0, mean_.norm());
    if (std::sqrt(off) > tol) return std::numeric_limits<double>::infinity();
  }
  double s = 0.0;
  for (Eigen::Index r = 0; r < whitening_.rows(); ++r) {
    double proj = 0.0;
    for (Eigen::Index k = 0; k < d; ++k) proj += whitening_(r, k) * (x[k] - mean_[k]);
    s += proj * proj;
  }
  return s;
}

bool RegionEstimate::contains(std::span<const double> x) const {
  return mahalanobis_sq(x) <= z_ * z_;
}

RegionEstimate ellipse_region(const ParticleCloud& cloud, double z) {
  return RegionEstimate(mean(cloud), cov(cloud), z);
}

double region_mass(const ParticleCloud& cloud, const RegionEstimate& region) {
  if (cloud.dimension() != region.dimension()) {
    throw std::invalid_argument("region_mass: dimension mismatch");
  }
  return mean_fn(cloud, [&](std::span<const double> x) { return region.contains(x) ? 1.0 : 0.0; }) /
         cloud.total_weight();
}

double expected_normal_mass(int d, double z) {
  if (d < 1) throw std::invalid_argument("expected_normal_mass: d must be >= 1");
  if (!(z > 0.0)) throw std::invalid_argument("expected_normal_mass: z must be > 0");
  return std::pow(std::erf(z / std::numbers::sqrt2), d);
}

double region_volume(const RegionEstimate& region) {
  const double d = static_cast<double>(region.dimension());
  const double det = region.covariance().determinant();
  if (region.degenerate() || !(det > 0.0)) return 0.0;
  const double unit_ball = std::pow(std::numbers::pi, d / 2.0) / std::tgamma(d / 2.0 + 1.0);
  return std::pow(region.z_score(), d) * unit_ball * std::sqrt(det);
}

RegionEstimate hyper_to_param_region(const ParticleCloud& hyper_cloud, const Model& model,
                                     double z) {
  if (hyper_cloud.size() == 0) throw std::invalid_argument("hyper_to_param_region: empty cloud");
  const auto first = model.intermediate_moments(hyper_cloud.location(0));
  if (!first) {
    throw std::invalid_argument("hyper_to_param_region: model '" + model.id() +
                                "' has no closed-form intermediate moments");
  }
  const Eigen::Index dx = first->mean.size();
  const double total = hyper_cloud.total_weight();

  Vector mean_of_means = Vector::Zero(dx);
  Matrix mean_of_covs = Matrix::Zero(dx, dx);
  Matrix means(dx, hyper_cloud.size());
  for (Eigen::Index i = 0; i < hyper_cloud.size(); ++i) {
    const auto m = model.intermediate_moments(hyper_cloud.location(i));
    const double w = hyper_cloud.weights()[i] / total;
    means.col(i) = m->mean;
    mean_of_means += w * m->mean;
    mean_of_covs += w * m->covariance;
  }
  Matrix cov_of_means = Matrix::Zero(dx, dx);
  for (Eigen::Index i = 0; i < hyper_cloud.size(); ++i) {
    const Vector d = means.col(i) - mean_of_means;
    cov_of_means += (hyper_cloud.weights()[i] / total) * d * d.transpose();
  }
  return RegionEstimate(mean_of_means, mean_of_covs + cov_of_means, z);
}

}  // namespace smcdesign

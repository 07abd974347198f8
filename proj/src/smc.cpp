#include "smcdesign/smc.hpp"

#include "smcdesign/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>
#include <sstream>

namespace smcdesign {

namespace {

void check_weights(const Vector& w) {
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (!std::isfinite(w[i]) || w[i] < 0.0) {
      throw std::invalid_argument("particle weights must be finite and nonnegative");
    }
  }
}

std::span<double> mutable_span(Vector& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

void repair_location(const Model& model, Eigen::Ref<Vector> x) {
  const auto& bounds = model.descriptor().parameter_bounds;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    x[k] = std::clamp(x[k], bounds[k].lower, bounds[k].upper);
  }
}

}  // namespace

// ---------------------------------------------------------------------------

ParticleCloud::ParticleCloud(Vector weights, Matrix locations)
    : weights_(std::move(weights)), locations_(std::move(locations)) {
  if (weights_.size() == 0) throw std::invalid_argument("particle cloud needs n >= 1");
  if (locations_.cols() != weights_.size() || locations_.rows() == 0) {
    throw std::invalid_argument("particle cloud: locations must be d x n with d >= 1");
  }
  check_weights(weights_);
}

void ParticleCloud::set_weights(Vector weights) {
  if (weights.size() != weights_.size()) throw std::invalid_argument("weight count mismatch");
  check_weights(weights);
  weights_ = std::move(weights);
}

double ParticleCloud::total_weight() const { return kernels::parallel::sum(weight_span()); }

// ---------------------------------------------------------------------------

void GaussianPrior::validate() const {
  if (mean.size() == 0 || covariance.rows() != mean.size() || covariance.cols() != mean.size()) {
    throw std::invalid_argument("prior mean/covariance dimension mismatch");
  }
  if (!mean.allFinite() || !covariance.allFinite()) {
    throw std::invalid_argument("prior mean/covariance must be finite");
  }
  if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() >
      1e-12 * std::max(1.0, covariance.cwiseAbs().maxCoeff())) {
    throw std::invalid_argument("prior covariance must be symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(covariance, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -1e-12 * eig.eigenvalues().cwiseAbs().maxCoeff()) {
    throw std::invalid_argument("prior covariance must be positive semidefinite");
  }
}

NormalSampler::NormalSampler(Vector mean, const Matrix& covariance)
    : mean_(std::move(mean)), factor_(regularized_sqrt_factor(covariance)) {
  if (factor_.rows() != mean_.size()) throw std::invalid_argument("normal sampler: size mismatch");
}

void NormalSampler::sample_into(Rng& rng, Eigen::Ref<Vector> out) const {
  std::normal_distribution<double> normal;
  Vector z(mean_.size());
  for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = normal(rng);
  out = mean_ + factor_ * z;
}

Vector NormalSampler::operator()(Rng& rng) const {
  Vector x(mean_.size());
  sample_into(rng, x);
  return x;
}

Matrix regularized_sqrt_factor(const Matrix& s) {
  const Eigen::Index d = s.rows();
  if (s.cols() != d || d == 0) throw std::invalid_argument("covariance must be square");
  if (!s.allFinite()) throw std::domain_error("covariance is not finite");
  const Matrix sym = 0.5 * (s + s.transpose());
  const double delta = 1e-12 * sym.trace() / static_cast<double>(d);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym + delta * Matrix::Identity(d, d));
  Vector lambda = eig.eigenvalues();
  const double scale = std::max(lambda.cwiseAbs().maxCoeff(), 0.0);
  if (lambda.minCoeff() < -1e-10 * scale) {
    throw std::domain_error("covariance is not positive semidefinite");
  }
  lambda = lambda.cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * lambda.asDiagonal();
}

// ---------------------------------------------------------------------------

ParticleCloud init_cloud(const Model& model, Eigen::Index n, const PriorSampler& prior, Rng& rng) {
  if (n < 1) throw std::invalid_argument("init_cloud: need n >= 1 particles");
  Matrix locations(model.dimension(), n);
  for (Eigen::Index i = 0; i < n; ++i) {
    int attempt = 0;
    for (;;) {
      Vector x = prior(rng);
      if (x.size() != model.dimension()) {
        throw std::invalid_argument("prior sample has wrong dimension for model " + model.id());
      }
      if (model.in_domain(as_span(x))) {
        locations.col(i) = x;
        break;
      }
      if (++attempt >= kMaxPriorRetries) {
        throw std::runtime_error("prior keeps producing parameters outside the domain of " +
                                 model.id() + "; is the prior mis-specified?");
      }
    }
  }
  return ParticleCloud(Vector::Constant(n, 1.0 / static_cast<double>(n)), std::move(locations));
}

Vector mean(const ParticleCloud& cloud) {
  return kernels::parallel::weighted_mean(cloud.weight_span(), cloud.locations());
}

Matrix cov(const ParticleCloud& cloud) {
  // Centered (two-pass) form of E[x x^T] - mu mu^T; same quantity, no
  // cancellation for tight clouds far from the origin.
  const Vector mu = mean(cloud);
  const Matrix c = kernels::parallel::weighted_covariance(cloud.weight_span(), cloud.locations(), mu);
  return 0.5 * (c + c.transpose());
}

double mean_fn(const ParticleCloud& cloud,
               const std::function<double(std::span<const double>)>& f) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    const double v = f(cloud.location(i));
    if (!std::isfinite(v)) throw std::domain_error("mean_fn: function returned a non-finite value");
    s += cloud.weights()[i] * v;
  }
  return s;
}

Vector mean_fn(const ParticleCloud& cloud,
               const std::function<Vector(std::span<const double>)>& f) {
  Vector s;
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    const Vector v = f(cloud.location(i));
    if (!v.allFinite()) throw std::domain_error("mean_fn: function returned a non-finite value");
    if (i == 0) s = Vector::Zero(v.size());
    if (v.size() != s.size()) throw std::invalid_argument("mean_fn: inconsistent result size");
    s += cloud.weights()[i] * v;
  }
  return s;
}

// ---------------------------------------------------------------------------

PosteriorCollapse::PosteriorCollapse(Outcome outcome, ExperimentControl control)
    : std::runtime_error([&] {
        std::ostringstream msg;
        msg << "posterior collapse: every particle has zero likelihood for outcome "
            << outcome.value << " at t = " << control.time();
        return msg.str();
      }()),
      outcome_(outcome),
      control_(control) {}

void update(ParticleCloud& cloud, const Model& model, Outcome d, const ExperimentControl& c) {
  Vector lik(cloud.size());
  model.likelihoods(d, cloud.locations(), c, mutable_span(lik));
  Vector w(cloud.size());
  const double total = kernels::parallel::reweight(cloud.weight_span(), as_span(lik), mutable_span(w));
  if (!(total > 0.0)) throw PosteriorCollapse(d, c);
  w /= total;
  cloud.set_weights(std::move(w));
}

void update_serial(ParticleCloud& cloud, const Model& model, Outcome d,
                   const ExperimentControl& c) {
  Vector lik(cloud.size());
  model.likelihoods_serial(d, cloud.locations(), c, mutable_span(lik));
  Vector w(cloud.size());
  const double total = kernels::serial::reweight(cloud.weight_span(), as_span(lik), mutable_span(w));
  if (!(total > 0.0)) throw PosteriorCollapse(d, c);
  for (Eigen::Index i = 0; i < w.size(); ++i) w[i] /= total;
  cloud.set_weights(std::move(w));
}

double effective_sample_size(const ParticleCloud& cloud) {
  const double total = cloud.total_weight();
  return total * total / kernels::parallel::sum_of_squares(cloud.weight_span());
}

// ---------------------------------------------------------------------------

void ResampleConfig::validate() const {
  if (!(a >= 0.0 && a <= 1.0)) throw std::invalid_argument("resample a must be in [0, 1]");
  if (!(resample_threshold >= 0.0 && resample_threshold <= 1.0)) {
    throw std::invalid_argument("resample_threshold must be in [0, 1]");
  }
}

ParticleCloud resample(const ParticleCloud& cloud, const Model& model,
                       const ResampleConfig& config, Rng& rng) {
  config.validate();
  const Eigen::Index n = cloud.size();
  const Eigen::Index d = cloud.dimension();
  const Vector mu = mean(cloud);
  Matrix sigma = cov(cloud);
  if (!sigma.allFinite()) throw std::domain_error("resample: covariance is not finite");
  // One distinct location: cov() returns rounding noise, not spread.
  bool single_location = true;
  for (Eigen::Index i = 1; i < n && single_location; ++i) {
    single_location = cloud.locations().col(i) == cloud.locations().col(0);
  }
  if (single_location) sigma.setZero();
  const double a = config.a;
  const Matrix factor = regularized_sqrt_factor((1.0 - a * a) * sigma);
  const bool perturb = !factor.isZero(0.0);

  // Cumulative weights for ancestor selection.
  std::vector<double> cumulative(static_cast<std::size_t>(n));
  double running = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    running += cloud.weights()[i];
    cumulative[static_cast<std::size_t>(i)] = running;
  }

  std::normal_distribution<double> normal;
  Matrix locations(d, n);
  Vector z(d), centre(d), x(d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double u = uniform01(rng) * running;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    auto j = static_cast<Eigen::Index>(it - cumulative.begin());
    j = std::min(j, n - 1);

    centre = a * cloud.locations().col(j) + (1.0 - a) * mu;
    if (!perturb) {
      locations.col(i) = centre;
      continue;
    }
    bool accepted = false;
    for (int attempt = 0; attempt <= kMaxRepairRedraws && !accepted; ++attempt) {
      for (Eigen::Index k = 0; k < d; ++k) z[k] = normal(rng);
      x.noalias() = centre + factor * z;
      accepted = model.in_domain(as_span(x));
    }
    if (!accepted) repair_location(model, x);
    locations.col(i) = x;
  }
  return ParticleCloud(Vector::Constant(n, 1.0 / static_cast<double>(n)), std::move(locations));
}

void write_snapshot(std::ostream& os, const ParticleCloud& cloud,
                    const std::vector<std::string>& parameter_names) {
  os << "weight";
  for (const auto& name : parameter_names) os << ',' << name;
  os << '\n';
  os.precision(17);
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    os << cloud.weights()[i];
    for (Eigen::Index k = 0; k < cloud.dimension(); ++k) os << ',' << cloud.locations()(k, i);
    os << '\n';
  }
}

}  // namespace smcdesign

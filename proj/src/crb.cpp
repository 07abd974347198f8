#include "smcdesign/crb.hpp"

#include "smcdesign/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace smcdesign {

namespace {

constexpr int kMaxDim = 8;
using SmallVector = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDim, 1>;
using SmallMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;

struct FisherAccumulator {
  SmallMatrix j;
  bool singular = false;
};

// Adds weight * I(x; c) to acc. No heap allocation.
void accumulate_fisher(const Model& model, std::span<const double> x, const ExperimentControl& c,
                       double weight, FisherAccumulator& acc) {
  const auto d = static_cast<Eigen::Index>(x.size());
  const auto& bounds = model.descriptor().parameter_bounds;
  SmallVector point = Eigen::Map<const SmallVector>(x.data(), d);
  auto p0_at = [&](const SmallVector& pt) {
    return model.outcome_probabilities({pt.data(), static_cast<std::size_t>(d)}, c)[0];
  };

  const double p = p0_at(point);
  SmallVector step(d), plus(d), minus(d), grad(d);
  for (Eigen::Index k = 0; k < d; ++k) {
    const double h = fisher_step(point[k]);
    step[k] = h;
    SmallVector pt = point;
    if (point[k] - h < bounds[k].lower) {
      // Second-order forward difference at a lower bound.
      pt[k] = point[k] + h;
      const double f1 = p0_at(pt);
      pt[k] = point[k] + 2.0 * h;
      const double f2 = p0_at(pt);
      grad[k] = (-3.0 * p + 4.0 * f1 - f2) / (2.0 * h);
      plus[k] = f1;
      minus[k] = std::numeric_limits<double>::quiet_NaN();
    } else if (point[k] + h > bounds[k].upper) {
      pt[k] = point[k] - h;
      const double b1 = p0_at(pt);
      pt[k] = point[k] - 2.0 * h;
      const double b2 = p0_at(pt);
      grad[k] = (3.0 * p - 4.0 * b1 + b2) / (2.0 * h);
      plus[k] = std::numeric_limits<double>::quiet_NaN();
      minus[k] = b1;
    } else {
      pt[k] = point[k] + h;
      plus[k] = p0_at(pt);
      pt[k] = point[k] - h;
      minus[k] = p0_at(pt);
      grad[k] = (plus[k] - minus[k]) / (2.0 * h);
    }
  }

  // Outcome 0 has gradient +grad, outcome 1 has -grad; the outer products
  // coincide.
  const std::array<double, 2> probs{p, 1.0 - p};
  for (int outcome = 0; outcome < 2; ++outcome) {
    const double pd = probs[static_cast<std::size_t>(outcome)];
    if (pd >= kZeroProbability) {
      acc.j.noalias() += (weight / pd) * grad * grad.transpose();
      continue;
    }
    // Zero of Pr(d): use the limit 2 * Hessian(Pr(d)).
    SmallMatrix hess(d, d);
    bool ok = plus.allFinite() && minus.allFinite();
    for (Eigen::Index k = 0; ok && k < d; ++k) {
      hess(k, k) = (plus[k] - 2.0 * p + minus[k]) / (step[k] * step[k]);
      for (Eigen::Index m = 0; m < k; ++m) {
        SmallVector pt = point;
        pt[k] += step[k];
        pt[m] += step[m];
        const double fpp = p0_at(pt);
        pt[m] -= 2.0 * step[m];
        const double fpm = p0_at(pt);
        pt[k] -= 2.0 * step[k];
        const double fmm = p0_at(pt);
        pt[m] += 2.0 * step[m];
        const double fmp = p0_at(pt);
        hess(k, m) = hess(m, k) = (fpp - fpm - fmp + fmm) / (4.0 * step[k] * step[m]);
      }
    }
    if (outcome == 1) hess = -hess;
    if (ok) {
      Eigen::SelfAdjointEigenSolver<SmallMatrix> eig(hess, Eigen::EigenvaluesOnly);
      const double scale = eig.eigenvalues().cwiseAbs().maxCoeff();
      ok = eig.eigenvalues().minCoeff() >= -1e-6 * scale;
    }
    if (ok) {
      acc.j.noalias() += (2.0 * weight) * hess;
    } else {
      acc.singular = true;
    }
  }
}

InfoMatrix to_info(const FisherAccumulator& acc) {
  InfoMatrix info;
  info.j = 0.5 * (acc.j + acc.j.transpose());
  info.singular_contribution = acc.singular;
  return info;
}

}  // namespace

InfoMatrix fisher_info(const Model& model, std::span<const double> x, const ExperimentControl& c) {
  model.validate(x);
  const auto d = static_cast<Eigen::Index>(x.size());
  if (d > kMaxDim) throw std::invalid_argument("fisher_info: model dimension too large");
  FisherAccumulator acc{SmallMatrix::Zero(d, d)};
  accumulate_fisher(model, x, c, 1.0, acc);
  InfoMatrix info = to_info(acc);
  info.n_experiments_absorbed = 1;
  return info;
}

InfoMatrix bayes_info(const Model& model, const ParticleCloud& cloud, const ExperimentControl& c) {
  const Eigen::Index d = cloud.dimension();
  if (d != model.dimension()) throw std::invalid_argument("bayes_info: dimension mismatch");
  if (d > kMaxDim) throw std::invalid_argument("bayes_info: model dimension too large");
  const double total = cloud.total_weight();
  const Eigen::Index n = cloud.size();
  const std::ptrdiff_t chunks = (n + kernels::kChunk - 1) / kernels::kChunk;
  std::vector<FisherAccumulator> partials(static_cast<std::size_t>(chunks),
                                          FisherAccumulator{SmallMatrix::Zero(d, d)});
  // Same fixed-chunk reduction as the kernels: result independent of the
  // thread count.
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ch = 0; ch < chunks; ++ch) {
    auto& acc = partials[static_cast<std::size_t>(ch)];
    const Eigen::Index end = std::min<Eigen::Index>(n, (ch + 1) * kernels::kChunk);
    for (Eigen::Index i = ch * kernels::kChunk; i < end; ++i) {
      const double w = cloud.weights()[i];
      if (w == 0.0) continue;
      accumulate_fisher(model, cloud.location(i), c, w / total, acc);
    }
  }
  FisherAccumulator sum{SmallMatrix::Zero(d, d)};
  for (const auto& p : partials) {
    sum.j += p.j;
    sum.singular = sum.singular || p.singular;
  }
  InfoMatrix info = to_info(sum);
  info.n_experiments_absorbed = 1;
  return info;
}

InfoMatrix prior_info(const GaussianPrior& prior) {
  prior.validate();
  const auto inv = information_inverse(prior.covariance);
  if (!inv) throw std::invalid_argument("prior_info: prior covariance is singular");
  InfoMatrix info;
  info.j = *inv;
  return info;
}

std::optional<Matrix> information_inverse(const Matrix& j) {
  const Matrix sym = 0.5 * (j + j.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
  const Vector& lambda = eig.eigenvalues();
  const double largest = lambda.cwiseAbs().maxCoeff();
  if (!(largest > 0.0) || lambda.minCoeff() <= 1e-12 * largest) return std::nullopt;
  Matrix inv = eig.eigenvectors() * lambda.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
  return 0.5 * (inv + inv.transpose());
}

BcrbStep bcrb_step(const InfoMatrix& j_prev, const Model& model, const ParticleCloud& cloud,
                   const ExperimentControl& c) {
  const InfoMatrix step_info = bayes_info(model, cloud, c);
  if (j_prev.j.rows() != step_info.j.rows()) throw std::invalid_argument("bcrb_step: size mismatch");
  BcrbStep result;
  result.j_next.j = j_prev.j + step_info.j;
  result.j_next.n_experiments_absorbed = j_prev.n_experiments_absorbed + 1;
  result.j_next.singular_contribution = j_prev.singular_contribution || step_info.singular_contribution;
  result.bound = information_inverse(result.j_next.j);
  return result;
}

}  // namespace smcdesign

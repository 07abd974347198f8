#ifndef SMCDESIGN_CRB_HPP_
#define SMCDESIGN_CRB_HPP_

#include "smcdesign/model.hpp"
#include "smcdesign/smc.hpp"

#include <optional>

namespace smcdesign {

// Fisher / Bayesian information matrix.
struct InfoMatrix {
  Matrix j;
  int n_experiments_absorbed = 0;
  // Set when some outcome had probability ~0 at a point where it is not a
  // smooth minimum; that contribution was dropped.
  bool singular_contribution = false;
};

// Central-difference step for coordinate value v.
inline double fisher_step(double v) { return std::max(1e-5 * std::abs(v), 1e-8); }

// Outcome probabilities below this are treated as zeros of the likelihood.
inline constexpr double kZeroProbability = 1e-10;

// sum_d Pr(d|x;c) grad log Pr(d|x;c) grad log Pr(d|x;c)^T, gradients by
// central differences. Near a zero of Pr(d|x;c) the term is replaced by its
// limit 2 * Hessian(Pr(d|.;c)), exact when the probability is locally the
// square of a smooth function (every shipped model).
InfoMatrix fisher_info(const Model& model, std::span<const double> x, const ExperimentControl& c);

// E_x[I(x; c)] over the cloud.
InfoMatrix bayes_info(const Model& model, const ParticleCloud& cloud, const ExperimentControl& c);

// J_0 = Sigma_0^{-1}. Throws std::invalid_argument on a singular covariance.
InfoMatrix prior_info(const GaussianPrior& prior);

struct BcrbStep {
  InfoMatrix j_next;
  // j_next^{-1}; absent while j_next is singular.
  std::optional<Matrix> bound;
};

// Inverse of a symmetric information matrix, or nullopt if it is singular
// (smallest eigenvalue <= 1e-12 of the largest).
std::optional<Matrix> information_inverse(const Matrix& j);

// J_{N+1} = J(pi; c_{N+1}) + J_N, with the expectation over `cloud`.
BcrbStep bcrb_step(const InfoMatrix& j_prev, const Model& model, const ParticleCloud& cloud,
                   const ExperimentControl& c);

}  // namespace smcdesign

#endif  // SMCDESIGN_CRB_HPP_

#ifndef SMCDESIGN_KERNELS_HPP_
#define SMCDESIGN_KERNELS_HPP_

#include "smcdesign/types.hpp"

#include <span>

// Inner loops over particles. Locations are stored one particle per column
// (d x n). Weights are passed as spans of length n.
//
// serial::   straightforward left-to-right loops; the reference.
// parallel:: OpenMP versions. Reductions are split into fixed-size chunks
//            whose partial results are combined in chunk order, so the result
//            is bit-identical for any thread count (but may differ from the
//            serial reference in the last bits).
namespace smcdesign::kernels {

inline constexpr std::ptrdiff_t kChunk = 1024;

// v^T Q v without temporaries.
inline double quadratic_form(const Matrix& q, const Vector& v) {
  double s = 0.0;
  for (Eigen::Index r = 0; r < v.size(); ++r) {
    double row = 0.0;
    for (Eigen::Index c = 0; c < v.size(); ++c) row += q(r, c) * v[c];
    s += v[r] * row;
  }
  return s;
}

namespace serial {

double sum(std::span<const double> v);
double sum_of_squares(std::span<const double> v);
// out[i] = w[i] * lik[i]; returns sum(out).
double reweight(std::span<const double> w, std::span<const double> lik, std::span<double> out);
Vector weighted_mean(std::span<const double> w, const Matrix& x);
// Centered form sum_i w_i (x_i - mean)(x_i - mean)^T.
Matrix weighted_covariance(std::span<const double> w, const Matrix& x, const Vector& mean);
// sum_i w_i (x_i - mean)^T Q (x_i - mean)
double weighted_quadratic_spread(std::span<const double> w, const Matrix& x, const Vector& mean,
                                 const Matrix& q);

}  // namespace serial

namespace parallel {

double sum(std::span<const double> v);
double sum_of_squares(std::span<const double> v);
double reweight(std::span<const double> w, std::span<const double> lik, std::span<double> out);
Vector weighted_mean(std::span<const double> w, const Matrix& x);
Matrix weighted_covariance(std::span<const double> w, const Matrix& x, const Vector& mean);
double weighted_quadratic_spread(std::span<const double> w, const Matrix& x, const Vector& mean,
                                 const Matrix& q);

}  // namespace parallel

}  // namespace smcdesign::kernels

#endif  // SMCDESIGN_KERNELS_HPP_

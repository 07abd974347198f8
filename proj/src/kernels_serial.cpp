#include "smcdesign/kernels.hpp"

#include <stdexcept>

namespace smcdesign::kernels::serial {

double sum(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

double sum_of_squares(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

double reweight(std::span<const double> w, std::span<const double> lik, std::span<double> out) {
  if (w.size() != lik.size() || w.size() != out.size()) {
    throw std::invalid_argument("reweight: size mismatch");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    out[i] = w[i] * lik[i];
    total += out[i];
  }
  return total;
}

Vector weighted_mean(std::span<const double> w, const Matrix& x) {
  Vector mean = Vector::Zero(x.rows());
  for (Eigen::Index i = 0; i < x.cols(); ++i) mean += w[i] * x.col(i);
  return mean;
}

Matrix weighted_covariance(std::span<const double> w, const Matrix& x, const Vector& mean) {
  const Eigen::Index d = x.rows();
  Matrix cov = Matrix::Zero(d, d);
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    const Vector dx = x.col(i) - mean;
    cov.noalias() += w[i] * dx * dx.transpose();
  }
  return cov;
}

double weighted_quadratic_spread(std::span<const double> w, const Matrix& x, const Vector& mean,
                                 const Matrix& q) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    const Vector dx = x.col(i) - mean;
    s += w[i] * quadratic_form(q, dx);
  }
  return s;
}

}  // namespace smcdesign::kernels::serial

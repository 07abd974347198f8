#include "smcdesign/kernels.hpp"

#include <stdexcept>
#include <vector>

namespace smcdesign::kernels::parallel {

namespace {

std::ptrdiff_t chunk_count(std::ptrdiff_t n) { return (n + kChunk - 1) / kChunk; }

// Applies `body(begin, end)` to each chunk in parallel, storing its result in
// partials[c], then folds partials in chunk order.
template <typename T, typename Body>
T chunked_reduce(std::ptrdiff_t n, T zero, Body body) {
  const std::ptrdiff_t chunks = chunk_count(n);
  std::vector<T> partials(static_cast<std::size_t>(chunks), zero);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < chunks; ++c) {
    const std::ptrdiff_t begin = c * kChunk;
    const std::ptrdiff_t end = std::min(n, begin + kChunk);
    partials[static_cast<std::size_t>(c)] = body(begin, end);
  }
  T total = zero;
  for (const auto& p : partials) total += p;
  return total;
}

}  // namespace

double sum(std::span<const double> v) {
  return chunked_reduce(static_cast<std::ptrdiff_t>(v.size()), 0.0,
                        [&](std::ptrdiff_t b, std::ptrdiff_t e) {
                          double s = 0.0;
                          for (auto i = b; i < e; ++i) s += v[i];
                          return s;
                        });
}

double sum_of_squares(std::span<const double> v) {
  return chunked_reduce(static_cast<std::ptrdiff_t>(v.size()), 0.0,
                        [&](std::ptrdiff_t b, std::ptrdiff_t e) {
                          double s = 0.0;
                          for (auto i = b; i < e; ++i) s += v[i] * v[i];
                          return s;
                        });
}

double reweight(std::span<const double> w, std::span<const double> lik, std::span<double> out) {
  if (w.size() != lik.size() || w.size() != out.size()) {
    throw std::invalid_argument("reweight: size mismatch");
  }
  return chunked_reduce(static_cast<std::ptrdiff_t>(w.size()), 0.0,
                        [&](std::ptrdiff_t b, std::ptrdiff_t e) {
                          double s = 0.0;
                          for (auto i = b; i < e; ++i) {
                            out[i] = w[i] * lik[i];
                            s += out[i];
                          }
                          return s;
                        });
}

Vector weighted_mean(std::span<const double> w, const Matrix& x) {
  return chunked_reduce(static_cast<std::ptrdiff_t>(x.cols()), Vector(Vector::Zero(x.rows())),
                        [&](std::ptrdiff_t b, std::ptrdiff_t e) {
                          Vector s = Vector::Zero(x.rows());
                          for (auto i = b; i < e; ++i) s += w[i] * x.col(i);
                          return s;
                        });
}

Matrix weighted_covariance(std::span<const double> w, const Matrix& x, const Vector& mean) {
  const Eigen::Index d = x.rows();
  return chunked_reduce(static_cast<std::ptrdiff_t>(x.cols()), Matrix(Matrix::Zero(d, d)),
                        [&](std::ptrdiff_t b, std::ptrdiff_t e) {
                          Matrix s = Matrix::Zero(d, d);
                          Vector dx(d);
                          for (auto i = b; i < e; ++i) {
                            dx = x.col(i) - mean;
                            s.noalias() += w[i] * dx * dx.transpose();
                          }
                          return s;
                        });
}

double weighted_quadratic_spread(std::span<const double> w, const Matrix& x, const Vector& mean,
                                 const Matrix& q) {
  const Eigen::Index d = x.rows();
  return chunked_reduce(static_cast<std::ptrdiff_t>(x.cols()), 0.0,
                        [&](std::ptrdiff_t b, std::ptrdiff_t e) {
                          double s = 0.0;
                          Vector dx(d);
                          for (auto i = b; i < e; ++i) {
                            dx = x.col(i) - mean;
                            s += w[i] * quadratic_form(q, dx);
                          }
                          return s;
                        });
}

}  // namespace smcdesign::kernels::parallel

#include "smcdesign/crb.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace smcdesign;

namespace {

ParticleCloud point_mass(const Vector& x) { return ParticleCloud(Vector::Constant(1, 1.0), x); }

double min_eigenvalue(const Matrix& m) {
  return Eigen::SelfAdjointEigenSolver<Matrix>(m, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
}

}  // namespace

TEST_SUITE("crb") {

TEST_CASE("fisher information of the decoherence-free model is t^2") {
  const KnownT2Model model(std::nullopt);
  double worst = 0.0;
  for (int i = 0; i < 10; ++i) {
    for (int k = 0; k < 10; ++k) {
      const double omega = 0.1 + 0.1 * i;
      const double t = 0.1 + (50.0 - 0.1) * k / 9.0;
      const double x[1] = {omega};
      const InfoMatrix info = fisher_info(model, x, ExperimentControl(t));
      worst = std::max(worst, std::abs(info.j(0, 0) - t * t) / (t * t));
    }
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("fisher information at a zero of the likelihood uses the smooth limit") {
  const KnownT2Model model(std::nullopt);
  const double x[1] = {1.0};
  const InfoMatrix info = fisher_info(model, x, ExperimentControl(std::numbers::pi));
  CHECK(info.j(0, 0) == doctest::Approx(std::numbers::pi * std::numbers::pi).epsilon(1e-6));
  CHECK_FALSE(info.singular_contribution);
}

TEST_CASE("fisher information is zero at t = 0") {
  const UnknownT2Model model;
  const double x[2] = {0.5, 0.001};
  CHECK(fisher_info(model, x, ExperimentControl(0.0)).j.isZero(0.0));
}

TEST_CASE("single-measurement fisher matrix of the two-parameter model is rank one") {
  const UnknownT2Model model;
  for (double t : {3.0, 40.0, 250.0, 1000.0}) {
    const double x[2] = {0.5, 0.001};
    const Matrix j = fisher_info(model, x, ExperimentControl(t)).j;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(j);
    const double largest = eig.eigenvalues().cwiseAbs().maxCoeff();
    CHECK(largest > 0.0);
    CHECK(std::abs(eig.eigenvalues()[0]) <= 1e-6 * largest);
    CHECK_FALSE(information_inverse(j).has_value());
  }
}

TEST_CASE("fisher information at the lower bound of a constrained parameter") {
  const UnknownT2Model model;
  const double x[2] = {0.5, 0.0};
  const InfoMatrix info = fisher_info(model, x, ExperimentControl(10.0));
  CHECK(info.j.allFinite());
  CHECK(min_eigenvalue(info.j) >= -1e-9 * info.j.norm());
}

TEST_CASE("bayes information") {
  const KnownT2Model model(std::nullopt);
  Vector a = Vector::Constant(1, 0.3), b = Vector::Constant(1, 0.8);
  const InfoMatrix ia = fisher_info(model, as_span(a), ExperimentControl(4.0));
  CHECK(bayes_info(model, point_mass(a), ExperimentControl(4.0)).j(0, 0) == doctest::Approx(ia.j(0, 0)));

  Matrix x(1, 2);
  x << 0.3, 0.8;
  const ParticleCloud two(Vector::Constant(2, 0.5), x);
  CHECK(bayes_info(model, two, ExperimentControl(4.0)).j(0, 0) == doctest::Approx(16.0).epsilon(1e-6));

  const UnknownT2Model unknown;
  Vector p(2), q(2);
  p << 0.5, 0.001;
  q << 0.55, 0.002;
  Matrix xs(2, 2);
  xs << p, q;
  const ParticleCloud pair(Vector::Constant(2, 0.5), xs);
  const ExperimentControl c(30.0);
  const Matrix avg = 0.5 * (fisher_info(unknown, as_span(p), c).j + fisher_info(unknown, as_span(q), c).j);
  CHECK((bayes_info(unknown, pair, c).j - avg).norm() <= 1e-9 * avg.norm());

  Rng rng(1);
  PriorSampler prior = [](Rng& r) {
    std::normal_distribution<double> g(0.5, 0.3);
    return Vector::Constant(1, g(r));
  };
  const ParticleCloud cloud = init_cloud(model, 500, prior, rng);
  CHECK(bayes_info(model, cloud, ExperimentControl(7.0)).j(0, 0) == doctest::Approx(49.0).epsilon(1e-6));
}

TEST_CASE("prior information") {
  GaussianPrior p1{Vector::Constant(1, 0.5), Matrix::Constant(1, 1, 0.01)};
  CHECK(prior_info(p1).j(0, 0) == doctest::Approx(100.0).epsilon(1e-12));

  GaussianPrior p2{Vector::Zero(3), Matrix::Identity(3, 3)};
  CHECK((prior_info(p2).j - Matrix::Identity(3, 3)).norm() < 1e-12);

  GaussianPrior p3{Vector::Zero(2), Vector(Eigen::Vector2d(0.0025, 0.00025 * 0.00025)).asDiagonal()};
  const Matrix j3 = prior_info(p3).j;
  CHECK(j3(0, 0) == doctest::Approx(400.0).epsilon(1e-10));
  CHECK(j3(1, 1) == doctest::Approx(1.6e7).epsilon(1e-10));
  CHECK(j3(0, 1) == 0.0);

  GaussianPrior singular{Vector::Zero(2), Matrix::Zero(2, 2)};
  CHECK_THROWS_AS(prior_info(singular), std::invalid_argument);

  // Score identity E[(d log pi)^2] = 1/sigma^2 by Monte Carlo.
  Rng rng(2);
  std::normal_distribution<double> g(0.5, 0.1);
  constexpr int draws = 1'000'000;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < draws; ++i) {
    const double score = -(g(rng) - 0.5) / 0.01;
    sum += score * score;
    sum_sq += score * score * score * score;
  }
  const double m = sum / draws;
  const double se = std::sqrt((sum_sq / draws - m * m) / draws);
  CHECK(std::abs(m - prior_info(p1).j(0, 0)) <= 3.0 * se);
}

TEST_CASE("bcrb step") {
  const KnownT2Model model(std::nullopt);
  InfoMatrix j0;
  j0.j = Matrix::Constant(1, 1, 100.0);
  Rng rng(3);
  PriorSampler prior = [](Rng& r) {
    std::normal_distribution<double> g(0.5, 0.1);
    return Vector::Constant(1, g(r));
  };
  const ParticleCloud cloud = init_cloud(model, 200, prior, rng);
  const BcrbStep s = bcrb_step(j0, model, cloud, ExperimentControl(10.0));
  CHECK(s.j_next.j(0, 0) == doctest::Approx(200.0).epsilon(1e-8));
  REQUIRE(s.bound.has_value());
  CHECK((*s.bound)(0, 0) == doctest::Approx(1.0 / 200.0).epsilon(1e-8));
  CHECK(s.j_next.n_experiments_absorbed == 1);

  const BcrbStep zero = bcrb_step(j0, model, cloud, ExperimentControl(0.0));
  CHECK(zero.j_next.j == j0.j);
}

TEST_CASE("two distinct times make the two-parameter bound exist") {
  const UnknownT2Model model;
  Vector x(2);
  x << 0.5, 0.001;
  const ParticleCloud cloud = point_mass(x);
  InfoMatrix none;
  none.j = Matrix::Zero(2, 2);
  const BcrbStep one = bcrb_step(none, model, cloud, ExperimentControl(100.0));
  CHECK_FALSE(one.bound.has_value());
  const BcrbStep two = bcrb_step(one.j_next, model, cloud, ExperimentControl(370.0));
  CHECK(two.bound.has_value());

  InfoMatrix j0 = prior_info(GaussianPrior{x, Vector(Eigen::Vector2d(0.0025, 6.25e-8)).asDiagonal()});
  const BcrbStep a = bcrb_step(j0, model, cloud, ExperimentControl(100.0));
  const BcrbStep b = bcrb_step(a.j_next, model, cloud, ExperimentControl(370.0));
  REQUIRE(b.bound.has_value());
  CHECK(min_eigenvalue(*b.bound) > 0.0);
}

TEST_CASE("bcrb trace is non-increasing and J stays symmetric PSD") {
  const UnknownT2Model model;
  Rng rng(4);
  PriorSampler prior = [](Rng& r) {
    std::normal_distribution<double> g(0.0, 1.0);
    Vector x(2);
    x << 0.5 + 0.05 * g(r), std::abs(0.001 + 0.00025 * g(r));
    return x;
  };
  const ParticleCloud cloud = init_cloud(model, 300, prior, rng);
  Matrix q(2, 2);
  q << 1.0, 0.0, 0.0, 100.0;
  InfoMatrix j = prior_info(GaussianPrior{Vector(Eigen::Vector2d(0.5, 0.001)),
                                          Vector(Eigen::Vector2d(0.0025, 6.25e-8)).asDiagonal()});
  double previous = (*information_inverse(j.j) * q).trace();
  for (int k = 1; k <= 40; ++k) {
    const BcrbStep s = bcrb_step(j, model, cloud, ExperimentControl(1000.0 * uniform01(rng)));
    j = s.j_next;
    CHECK((j.j - j.j.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * j.j.cwiseAbs().maxCoeff());
    CHECK(min_eigenvalue(j.j) >= -1e-9 * j.j.norm());
    REQUIRE(s.bound.has_value());
    const double trace = (*s.bound * q).trace();
    CHECK(trace <= previous * (1.0 + 1e-12));
    previous = trace;
  }
}

TEST_CASE("information_inverse") {
  CHECK_FALSE(information_inverse(Matrix::Zero(2, 2)).has_value());
  Matrix m(2, 2);
  m << 4.0, 1.0, 1.0, 3.0;
  const auto inv = information_inverse(m);
  REQUIRE(inv.has_value());
  CHECK((*inv * m - Matrix::Identity(2, 2)).norm() < 1e-12);
}

}  // TEST_SUITE

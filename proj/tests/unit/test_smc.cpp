#include "smcdesign/smc.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

using namespace smcdesign;

namespace {

ParticleCloud cloud_1d(std::vector<double> w, std::vector<double> x) {
  Vector wv = Eigen::Map<Vector>(w.data(), static_cast<Eigen::Index>(w.size()));
  Matrix xm = Eigen::Map<Matrix>(x.data(), 1, static_cast<Eigen::Index>(x.size()));
  return ParticleCloud(wv, xm);
}

PriorSampler normal_prior(double mean, double var) {
  return [mean, var](Rng& rng) {
    std::normal_distribution<double> g(mean, std::sqrt(var));
    return Vector::Constant(1, g(rng));
  };
}

}  // namespace

TEST_SUITE("smc") {

TEST_CASE("particle cloud validation") {
  CHECK_THROWS_AS(ParticleCloud(Vector(0), Matrix(1, 0)), std::invalid_argument);
  CHECK_THROWS_AS(ParticleCloud(Vector::Constant(2, 0.5), Matrix::Zero(1, 3)), std::invalid_argument);
  CHECK_THROWS_AS(cloud_1d({0.5, -0.1}, {0.0, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(cloud_1d({0.5, std::nan("")}, {0.0, 1.0}), std::invalid_argument);
}

TEST_CASE("init_cloud") {
  const KnownT2Model model(std::nullopt);
  Rng rng(1);
  const ParticleCloud one = init_cloud(model, 1, normal_prior(0.5, 0.01), rng);
  CHECK(one.size() == 1);
  CHECK(one.weights()[0] == 1.0);

  const ParticleCloud c = init_cloud(model, 1000, normal_prior(0.5, 0.01), rng);
  CHECK(c.size() == 1000);
  CHECK(c.weights().sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(c.locations().row(0).mean() - 0.5) <= 3.0 * std::sqrt(0.01 / 1000));
  CHECK_THROWS_AS(init_cloud(model, 0, normal_prior(0.5, 0.01), rng), std::invalid_argument);

  // A prior that never lands in the domain is reported, not looped on.
  const UnknownT2Model unknown;
  PriorSampler bad = [](Rng&) { return Vector::Constant(2, -1.0); };
  CHECK_THROWS_AS(init_cloud(unknown, 5, bad, rng), std::runtime_error);

  // Out-of-domain draws are redrawn.
  PriorSampler half = [](Rng& r) {
    Vector x(2);
    x << 0.5, uniform01(r) - 0.5;
    return x;
  };
  const ParticleCloud repaired = init_cloud(unknown, 500, half, rng);
  CHECK(repaired.locations().row(1).minCoeff() >= 0.0);
}

TEST_CASE("mean and covariance") {
  CHECK(mean(cloud_1d({0.5, 0.5}, {-1.0, 1.0}))[0] == 0.0);
  CHECK(mean(cloud_1d({1.0, 0.0}, {3.0, 7.0}))[0] == 3.0);
  CHECK(cov(cloud_1d({0.5, 0.5}, {-1.0, 1.0}))(0, 0) == doctest::Approx(1.0));
  CHECK(cov(cloud_1d({1.0}, {4.2})).isZero(0.0));

  Rng rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> w(20), x(20);
    for (auto& v : w) v = u(rng);
    for (auto& v : x) v = 10.0 * u(rng) - 5.0;
    const double s = std::accumulate(w.begin(), w.end(), 0.0);
    for (auto& v : w) v /= s;
    const double m = mean(cloud_1d(w, x))[0];
    CHECK(m >= *std::min_element(x.begin(), x.end()));
    CHECK(m <= *std::max_element(x.begin(), x.end()));
  }

  Matrix sigma0(2, 2);
  sigma0 << 2.0, 0.6, 0.6, 1.0;
  NormalSampler sampler(Vector::Zero(2), sigma0);
  constexpr Eigen::Index n = 100'000;
  Matrix x(2, n);
  for (Eigen::Index i = 0; i < n; ++i) x.col(i) = sampler(rng);
  const Matrix c = cov(ParticleCloud(Vector::Constant(n, 1.0 / n), x));
  CHECK((c - c.transpose()).norm() == 0.0);
  for (int i = 0; i < 2; ++i) {
    for (int k = 0; k < 2; ++k) CHECK(std::abs(c(i, k) - sigma0(i, k)) <= 0.05 * std::abs(sigma0(i, k)));
  }
}

TEST_CASE("mean_fn") {
  const ParticleCloud c = cloud_1d({0.5, 0.5}, {-1.0, 1.0});
  CHECK(mean_fn(c, [](std::span<const double>) { return 1.0; }) == 1.0);
  CHECK(mean_fn(c, [](std::span<const double> x) { return std::abs(x[0]) <= 1.0 ? 1.0 : 0.0; }) == 1.0);
  CHECK(mean_fn(c, [](std::span<const double> x) { return x[0] * x[0]; }) == 1.0);
  CHECK_THROWS_AS(mean_fn(c, [](std::span<const double>) { return std::nan(""); }), std::domain_error);
  const Vector v = mean_fn(c, [](std::span<const double> x) { return Vector::Constant(2, x[0] + 2.0); });
  CHECK(v[0] == 2.0);
  CHECK(v[1] == 2.0);
}

TEST_CASE("update") {
  const KnownT2Model model(std::nullopt);
  // t = 0: every particle has likelihood 1 for outcome 0.
  ParticleCloud c = cloud_1d({0.2, 0.3, 0.5}, {0.1, 0.5, 0.9});
  update(c, model, Outcome{0}, ExperimentControl(0.0));
  CHECK(c.weights()[0] == doctest::Approx(0.2));
  CHECK(c.weights()[1] == doctest::Approx(0.3));
  CHECK(c.weights()[2] == doctest::Approx(0.5));

  // Likelihoods (0.2, 0.6): choose omega with cos^2(omega t / 2) = p at t = 1.
  const double w1 = 2.0 * std::acos(std::sqrt(0.2));
  const double w2 = 2.0 * std::acos(std::sqrt(0.6));
  ParticleCloud two = cloud_1d({0.5, 0.5}, {w1, w2});
  update(two, model, Outcome{0}, ExperimentControl(1.0));
  CHECK(two.weights()[0] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(two.weights()[1] == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(two.locations()(0, 0) == w1);
}

TEST_CASE("sequential updates equal the joint update") {
  const KnownT2Model model(100.0);
  Rng rng(4);
  ParticleCloud seq = init_cloud(model, 2000, normal_prior(0.5, 0.01), rng);
  const ParticleCloud start = seq;
  const ExperimentControl c1(3.0), c2(11.0);
  update(seq, model, Outcome{0}, c1);
  update(seq, model, Outcome{1}, c2);

  Vector joint(start.size());
  for (Eigen::Index i = 0; i < start.size(); ++i) {
    joint[i] = start.weights()[i] * model.likelihood(Outcome{0}, start.location(i), c1) *
               model.likelihood(Outcome{1}, start.location(i), c2);
  }
  joint /= joint.sum();
  CHECK((seq.weights() - joint).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("update matches the serial reference and is order-consistent") {
  const UnknownT2Model model;
  Rng rng(5);
  PriorSampler prior = [](Rng& r) {
    std::normal_distribution<double> g(0.0, 1.0);
    Vector x(2);
    x << 0.5 + 0.05 * g(r), std::abs(0.001 + 0.00025 * g(r));
    return x;
  };
  ParticleCloud a = init_cloud(model, 3000, prior, rng);
  ParticleCloud b = a;
  for (int k = 1; k <= 5; ++k) {
    const ExperimentControl c(37.0 * k);
    update(a, model, Outcome{static_cast<unsigned>(k % 2)}, c);
    update_serial(b, model, Outcome{static_cast<unsigned>(k % 2)}, c);
  }
  CHECK((a.weights() - b.weights()).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK(a.weights().sum() == doctest::Approx(1.0).epsilon(1e-10));

  // Reverse the particle order.
  ParticleCloud base = init_cloud(model, 257, prior, rng);
  Vector rw = base.weights().reverse();
  Matrix rx = base.locations().rowwise().reverse();
  ParticleCloud rev(rw, rx);
  update(base, model, Outcome{1}, ExperimentControl(90.0));
  update(rev, model, Outcome{1}, ExperimentControl(90.0));
  CHECK((base.weights() - Vector(rev.weights().reverse())).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("posterior collapse is surfaced") {
  const KnownT2Model model(std::nullopt);
  ParticleCloud c = cloud_1d({0.5, 0.5}, {0.3, 0.7});
  try {
    update(c, model, Outcome{1}, ExperimentControl(0.0));
    FAIL("expected PosteriorCollapse");
  } catch (const PosteriorCollapse& e) {
    CHECK(e.outcome().value == 1u);
    CHECK(e.control().time() == 0.0);
  }
  CHECK_THROWS_AS(update_serial(c, model, Outcome{1}, ExperimentControl(0.0)), PosteriorCollapse);
  CHECK(c.weights()[0] == 0.5);
}

TEST_CASE("effective sample size") {
  CHECK(effective_sample_size(cloud_1d({0.25, 0.25, 0.25, 0.25}, {1, 2, 3, 4})) == doctest::Approx(4.0));
  CHECK(effective_sample_size(cloud_1d({1.0, 0.0, 0.0}, {1, 2, 3})) == doctest::Approx(1.0));
  CHECK(effective_sample_size(cloud_1d({0.5, 0.5, 0.0, 0.0}, {1, 2, 3, 4})) == doctest::Approx(2.0));
}

TEST_CASE("resample with a = 1 is multinomial resampling") {
  const KnownT2Model model(std::nullopt);
  const ParticleCloud c = cloud_1d({0.1, 0.6, 0.3}, {1.0, 2.0, 3.0});
  Rng rng(6);
  ResampleConfig cfg;
  cfg.a = 1.0;
  std::array<int, 3> counts{};
  for (int rep = 0; rep < 200; ++rep) {
    const ParticleCloud r = resample(c, model, cfg, rng);
    for (Eigen::Index i = 0; i < r.size(); ++i) {
      const double x = r.locations()(0, i);
      REQUIRE((x == 1.0 || x == 2.0 || x == 3.0));
      ++counts[static_cast<std::size_t>(x) - 1];
      REQUIRE(r.weights()[i] == doctest::Approx(1.0 / 3.0));
    }
  }
  const double total = 600.0;
  CHECK(std::abs(counts[0] / total - 0.1) < 0.04);
  CHECK(std::abs(counts[1] / total - 0.6) < 0.06);
  CHECK(std::abs(counts[2] / total - 0.3) < 0.05);
}

TEST_CASE("resample of a single distinct location gives identical copies") {
  const UnknownT2Model model;
  Matrix x(2, 50);
  x.row(0).setConstant(0.5);
  x.row(1).setConstant(0.001);
  const ParticleCloud c(Vector::Constant(50, 0.02), x);
  Rng rng(7);
  const ParticleCloud r = resample(c, model, ResampleConfig{}, rng);
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    CHECK(r.locations().col(i) == r.locations().col(0));
    CHECK(std::abs(r.locations()(0, i) - 0.5) < 1e-15);
  }
}

TEST_CASE("resample respects model constraints") {
  const UnknownT2Model model;
  Rng rng(8);
  PriorSampler prior = [](Rng& r) {
    Vector x(2);
    x << 0.5 + 0.01 * (uniform01(r) - 0.5), 1e-4 * uniform01(r);
    return x;
  };
  ParticleCloud c = init_cloud(model, 2000, prior, rng);
  ResampleConfig cfg;
  cfg.a = 0.5;  // wide kernel: many draws land below 0
  for (int rep = 0; rep < 5; ++rep) {
    c = resample(c, model, cfg, rng);
    CHECK(c.locations().row(1).minCoeff() >= 0.0);
    CHECK(c.weights().sum() == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("resample is reproducible for a fixed seed") {
  const KnownT2Model model(std::nullopt);
  Rng init(9);
  const ParticleCloud c = init_cloud(model, 500, normal_prior(0.5, 0.01), init);
  Rng r1(10), r2(10);
  CHECK(resample(c, model, ResampleConfig{}, r1).locations() ==
        resample(c, model, ResampleConfig{}, r2).locations());
}

TEST_CASE("regularized square-root factor") {
  Matrix s(2, 2);
  s << 4.0, 1.0, 1.0, 2.0;
  const Matrix l = regularized_sqrt_factor(s);
  CHECK((l * l.transpose() - s).norm() < 1e-10);
  CHECK(regularized_sqrt_factor(Matrix::Zero(2, 2)).isZero(0.0));
  Matrix bad(2, 2);
  bad << 1.0, 0.0, 0.0, -1.0;
  CHECK_THROWS_AS(regularized_sqrt_factor(bad), std::domain_error);
}

TEST_CASE("resample config validation") {
  ResampleConfig cfg;
  CHECK(cfg.a == 0.98);
  CHECK(cfg.resample_threshold == 0.5);
  cfg.a = 1.5;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.a = 0.9;
  cfg.resample_threshold = -0.1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("gaussian prior validation") {
  GaussianPrior p{Vector::Constant(1, 0.5), Matrix::Constant(1, 1, 0.01)};
  CHECK_NOTHROW(p.validate());
  p.covariance(0, 0) = -1.0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  GaussianPrior q{Vector::Zero(2), Matrix::Identity(3, 3)};
  CHECK_THROWS_AS(q.validate(), std::invalid_argument);
}

TEST_CASE("snapshot layout") {
  const ParticleCloud c(Vector::Constant(2, 0.5), (Matrix(2, 2) << 0.25, 0.75, 1.0, 2.0).finished());
  std::ostringstream os;
  write_snapshot(os, c, {"omega", "inv_t2"});
  CHECK(os.str() == "weight,omega,inv_t2\n0.5,0.25,1\n0.5,0.75,2\n");
}

}  // TEST_SUITE

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "bslope/model.hpp"
#include "bslope/special.hpp"
#include "oracles.hpp"

using namespace bslope;

namespace {

RegressionData small_fixture(Eigen::Index n, Eigen::Index p, std::uint64_t seed) {
  Rng rng = make_stream(seed, 3);
  Matrix x(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j) x(i, j) = standard_normal(rng);
  Vector beta = Vector::Zero(p);
  beta(0) = 1.5;
  if (p > 2) beta(2) = -0.7;
  Vector y = x * beta;
  for (Eigen::Index i = 0; i < n; ++i) y(i) += 0.8 * standard_normal(rng);
  return RegressionData(x, y);
}

}  // namespace

TEST_CASE("normalizing constant closed values") {
  CHECK(normalizing_constant(LambdaSequence(Vector::Constant(1, 1.0)), 1.0) == doctest::Approx(0.5));
  CHECK(normalizing_constant(LambdaSequence(Vector::Constant(1, 1.0)), 4.0) == doctest::Approx(0.25));
  Vector l(2);
  l << 2.0, 1.0;
  CHECK(normalizing_constant(LambdaSequence(l), 1.0) == doctest::Approx(0.75));
}

TEST_CASE("normalizing constant scales as sigma^-p in log space") {
  Vector l(4);
  l << 3.0, 2.0, 2.0, 0.5;
  const LambdaSequence lam(l);
  for (double s2 : {0.3, 1.0, 7.5})
    CHECK(log_normalizing_constant(lam, s2) ==
          doctest::Approx(log_normalizing_constant(lam, 1.0) - 2.0 * std::log(s2)).epsilon(1e-14));
}

TEST_CASE("prior integrates to one") {
  const double s2 = 1.7;
  const LambdaSequence l1(Vector::Constant(1, 1.3));
  const double i1 = oracle::integrate([&](double b) { return std::exp(log_prior_beta(Vector::Constant(1, b), s2, l1)); },
                                      -kInf, kInf);
  CHECK(i1 == doctest::Approx(1.0).epsilon(1e-5));
  Vector l(2);
  l << 2.0, 0.6;
  const LambdaSequence l2(l);
  const double i2 = oracle::integrate_plane([&](double a, double b) {
    Vector v(2);
    v << a, b;
    return std::exp(log_prior_beta(v, s2, l2));
  });
  CHECK(i2 == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("log prior hand values") {
  CHECK(log_prior_beta(Vector::Zero(1), 1.0, LambdaSequence(Vector::Constant(1, 1.0))) ==
        doctest::Approx(std::log(0.5)));
  Vector l(2), b(2);
  l << 2.0, 1.0;
  b << 1.0, -3.0;
  CHECK(log_prior_beta(b, 1.0, LambdaSequence(l)) == doctest::Approx(std::log(0.75) - 7.0));
}

TEST_CASE("prior is invariant under signed permutations") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> z;
  Vector l(6);
  l << 3, 2.5, 2, 1, 0.5, 0.1;
  const LambdaSequence lam(l);
  for (int t = 0; t < 1000; ++t) {
    Vector b(6);
    for (auto& v : b) v = z(rng);
    std::vector<int> perm{0, 1, 2, 3, 4, 5};
    std::shuffle(perm.begin(), perm.end(), rng);
    Vector q(6);
    for (int i = 0; i < 6; ++i) q(i) = (rng() & 1 ? -1.0 : 1.0) * b(perm[static_cast<std::size_t>(i)]);
    REQUIRE(log_prior_beta(q, 0.9, lam) == doctest::Approx(log_prior_beta(b, 0.9, lam)).epsilon(1e-13));
  }
}

TEST_CASE("zero lambda is an improper prior") {
  CHECK_THROWS_AS(log_normalizing_constant(LambdaSequence(Vector::Zero(3)), 1.0), ImproperPrior);
  CHECK_THROWS_AS(LambdaSequence(Vector::LinSpaced(3, 0.0, 1.0)), DomainError);
}

TEST_CASE("log posterior differences") {
  Matrix x(2, 1);
  x << 1, 1;
  Vector y(2);
  y << 1, 1;
  const RegressionData data(x, y);
  const LambdaSequence lam(Vector::Constant(1, 1.0));
  const ChainState s0(Vector::Zero(1), 1.0, lam, data);
  const ChainState s1(Vector::Constant(1, 1.0), 1.0, lam, data);
  CHECK(log_posterior(s1, data, NoisePrior{}) - log_posterior(s0, data, NoisePrior{}) ==
        doctest::Approx(0.0).epsilon(1e-14));

  const RegressionData d = small_fixture(30, 4, 5);
  const LambdaSequence l4 = bh_lambda(0.3, 4);
  Vector b1 = Vector::LinSpaced(4, -1, 1), b2 = Vector::Constant(4, 0.3);
  const ChainState a(b1, 0.7, l4, d), c(b2, 0.7, l4, d);
  const double direct = (-d.rss(b1) + d.rss(b2)) / 1.4 + log_prior_beta(b1, 0.7, l4) - log_prior_beta(b2, 0.7, l4);
  CHECK(log_posterior(a, d, NoisePrior(2, 1)) - log_posterior(c, d, NoisePrior(2, 1)) ==
        doctest::Approx(direct).epsilon(1e-12));
}

TEST_CASE("bh lambda") {
  const LambdaSequence l = bh_lambda(0.2, 80);
  CHECK(l[0] == doctest::Approx(3.0233).epsilon(1e-4));
  CHECK(bh_lambda(1.0, 1)[0] == doctest::Approx(0.0).epsilon(1e-15));
  const LambdaSequence lit = bh_lambda(0.2, 80, 1.0, BhVariant::kLiteralCdf);
  CHECK(lit[0] == doctest::Approx(normal_cdf(1.0 - 0.2 / 160.0)));
  for (double q : {0.01, 0.05, 0.1, 0.2, 0.5, 0.9, 1.2, 1.9})
    for (long p : {1L, 2L, 5L, 17L, 80L, 300L}) {
      const Vector v = bh_lambda(q, p).values();
      REQUIRE(LambdaSequence::is_valid(v));
    }
}

TEST_CASE("reparametrized posterior is midpoint concave") {
  const RegressionData d = small_fixture(25, 5, 9);
  const LambdaSequence lam = bh_lambda(0.4, 5);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> u(0.05, 4.0);
  for (const NoisePrior& prior : {NoisePrior(3.0, 2.0), NoisePrior{}}) {
    long bad = 0;
    for (int t = 0; t < 10000; ++t) {
      ReparamPoint a, b, m;
      a.eta = Vector(5);
      b.eta = Vector(5);
      for (int i = 0; i < 5; ++i) {
        a.eta(i) = 2 * z(rng);
        b.eta(i) = 2 * z(rng);
      }
      a.psi = u(rng);
      b.psi = u(rng);
      m.eta = 0.5 * (a.eta + b.eta);
      m.psi = 0.5 * (a.psi + b.psi);
      const double fa = reparam_log_posterior(a, d, lam, prior);
      const double fb = reparam_log_posterior(b, d, lam, prior);
      const double fm = reparam_log_posterior(m, d, lam, prior);
      if (fm < 0.5 * (fa + fb) - 1e-9) ++bad;
    }
    CHECK(bad == 0);
  }
}

TEST_CASE("reparametrized posterior round trip") {
  const RegressionData d = small_fixture(25, 5, 4);
  const LambdaSequence lam = bh_lambda(0.4, 5);
  const NoisePrior prior(2.0, 1.0);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> z;
  double first = 0.0;
  for (int t = 0; t < 100; ++t) {
    Vector b(5);
    for (auto& v : b) v = z(rng);
    const double s2 = std::exp(z(rng));
    const ChainState st(b, s2, lam, d);
    const double diff = log_posterior(st, d, prior) -
                        reparam_log_posterior(ReparamPoint::from_natural(b, s2), d, lam, prior);
    if (t == 0) first = diff;
    REQUIRE(diff == doctest::Approx(first).epsilon(1e-10));
  }
  CHECK_THROWS_AS(reparam_log_posterior(ReparamPoint{Vector::Zero(5), 0.0}, d, lam, prior), DomainError);
}

TEST_CASE("standardization") {
  Rng rng = make_stream(3, 0);
  Matrix x(40, 3);
  for (auto& v : x.reshaped()) v = 5.0 + 3.0 * standard_normal(rng);
  Vector y = x.col(0) + Vector::Constant(40, 2.0);
  const RegressionData norm = RegressionData::standardized(x, y, Scaling::kUnitNorm);
  const RegressionData sd = RegressionData::standardized(x, y, Scaling::kUnitVariance);
  for (Eigen::Index j = 0; j < 3; ++j) {
    CHECK(norm.x().col(j).norm() == doctest::Approx(1.0));
    CHECK(norm.x().col(j).sum() == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(sd.x().col(j).squaredNorm() / 39.0 == doctest::Approx(1.0));
  }
  CHECK(norm.y().sum() == doctest::Approx(0.0).epsilon(1e-12));
  const Matrix back = norm.standardization()->apply(x);
  CHECK((back - norm.x()).norm() < 1e-12);
  Matrix c = x;
  c.col(1).setConstant(4.0);
  CHECK_THROWS_AS(RegressionData::standardized(c, y, Scaling::kUnitNorm), ConstantColumn);
}

TEST_CASE("rss through the gram form") {
  const RegressionData d = small_fixture(30, 6, 1);
  const Vector b = Vector::LinSpaced(6, -2, 2);
  CHECK(d.rss(b) == doctest::Approx((d.y() - d.x() * b).squaredNorm()).epsilon(1e-12));
}

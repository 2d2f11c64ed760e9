#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "bslope/lambda_inference.hpp"
#include "bslope/special.hpp"

using namespace bslope;

namespace {

LambdaSequence random_cone_point(std::mt19937_64& g, Eigen::Index p, double scale) {
  std::uniform_real_distribution<double> u(0.0, scale);
  Vector l(p);
  for (auto& v : l) v = u(g);
  std::sort(l.data(), l.data() + p, std::greater<double>());
  l(0) = std::max(l(0), 1e-6);
  return LambdaSequence(l);
}

Vector random_e(std::mt19937_64& g, Eigen::Index p) {
  std::uniform_real_distribution<double> u(0.05, 3.0);
  Vector e(p);
  for (auto& v : e) v = u(g);
  std::sort(e.data(), e.data() + p, std::greater<double>());
  return e;
}

RegressionData fixture(Eigen::Index n, Eigen::Index p, std::uint64_t seed) {
  Rng rng = make_stream(seed, 6);
  Matrix x(n, p);
  for (auto& v : x.reshaped()) v = standard_normal(rng);
  Vector beta = Vector::Zero(p);
  beta(0) = 1.0;
  if (p > 2) beta(p - 1) = -0.5;
  Vector y = x * beta;
  for (Eigen::Index i = 0; i < n; ++i) y(i) += standard_normal(rng);
  return RegressionData::standardized(x, y, Scaling::kUnitVariance);
}

}  // namespace

TEST_CASE("q function in one dimension") {
  const Vector e = Vector::Constant(1, 2.0);
  CHECK(q_function(LambdaSequence(Vector::Constant(1, 0.7)), e) == doctest::Approx(std::log(0.7) - 1.4));
  const QMaximum m = maximize_q(e, LambdaSequence(Vector::Constant(1, 3.0)));
  CHECK(m.converged);
  CHECK(m.lambda[0] == doctest::Approx(0.5).epsilon(1e-7));
  CHECK_THROWS_AS(q_function(LambdaSequence(Vector::Zero(2)), Vector::Ones(2)), ImproperPrior);
}

TEST_CASE("q gradient matches finite differences") {
  std::mt19937_64 g(1);
  for (int t = 0; t < 50; ++t) {
    Vector l = random_cone_point(g, 5, 3.0).values();
    l.array() += 0.1;
    const Vector e = random_e(g, 5);
    const Vector grad = q_gradient(LambdaSequence(l), e);
    for (Eigen::Index k = 0; k < 5; ++k) {
      Vector up = l, dn = l;
      up(k) += 1e-6;
      dn(k) -= 1e-6;
      auto q = [&](const Vector& v) {
        double s = 0.0, acc = 0.0;
        for (Eigen::Index i = 0; i < 5; ++i) s += std::log(acc += v(i)) - v(i) * e(i);
        return s;
      };
      REQUIRE(grad(k) == doctest::Approx((q(up) - q(dn)) / 2e-6).epsilon(1e-5));
    }
  }
}

TEST_CASE("q is concave on the cone") {
  std::mt19937_64 g(2);
  long bad = 0;
  for (int t = 0; t < 10000; ++t) {
    const Vector e = random_e(g, 4);
    const LambdaSequence a = random_cone_point(g, 4, 5.0), b = random_cone_point(g, 4, 5.0);
    const LambdaSequence m(0.5 * (a.values() + b.values()));
    if (q_function(m, e) < 0.5 * (q_function(a, e) + q_function(b, e)) - 1e-12) ++bad;
  }
  CHECK(bad == 0);
}

TEST_CASE("maximizer in two dimensions against a grid") {
  const Vector e = Vector::Ones(2);
  const QMaximum m = maximize_q(e, LambdaSequence(Vector::Constant(2, 0.5)));
  double best = -kInf, b1 = 0, b2 = 0;
  for (int i = 1; i <= 2000; ++i)
    for (int j = 0; j <= i; ++j) {
      Vector l(2);
      l << 0.002 * i, 0.002 * j;
      const double q = q_function(LambdaSequence(l), e);
      if (q > best) {
        best = q;
        b1 = l(0);
        b2 = l(1);
      }
    }
  for (int i = -200; i <= 200; ++i)
    for (int j = -200; j <= 200; ++j) {
      Vector l(2);
      l << b1 + 1e-5 * i, b2 + 1e-5 * j;
      if (l(1) < 0 || l(1) > l(0)) continue;
      const double q = q_function(LambdaSequence(l), e);
      if (q > best) {
        best = q;
        b1 = l(0);
        b2 = l(1);
      }
    }
  CHECK(std::abs(m.lambda[0] - b1) < 1e-4);
  CHECK(std::abs(m.lambda[1] - b2) < 1e-4);
}

TEST_CASE("maximizer stays in the cone and dominates random points") {
  std::mt19937_64 g(3);
  for (int t = 0; t < 20; ++t) {
    const Vector e = random_e(g, 3);
    const QMaximum m = maximize_q(e, random_cone_point(g, 3, 2.0));
    REQUIRE(LambdaSequence::is_valid(m.lambda.values()));
    long worse = 0;
    for (int k = 0; k < 100000 / 20; ++k)
      if (q_function(random_cone_point(g, 3, 6.0), e) > m.q + 1e-10) ++worse;
    CHECK(worse == 0);
  }
}

TEST_CASE("maximizer scales inversely with e") {
  std::mt19937_64 g(4);
  for (int t = 0; t < 20; ++t) {
    const Vector e = random_e(g, 3);
    const LambdaSequence init(Vector::Constant(3, 1.0));
    const QMaximum a = maximize_q(e, init, 1e-12);
    for (double s : {0.5, 3.0}) {
      const QMaximum b = maximize_q(s * e, init, 1e-12);
      REQUIRE((b.lambda.values() - a.lambda.values() / s).cwiseAbs().maxCoeff() < 1e-6);
    }
  }
}

TEST_CASE("expected scaled magnitudes are ordered") {
  const RegressionData d = fixture(60, 5, 5);
  SamplerConfig sc;
  sc.iters = 600;
  sc.seed = 5;
  const PosteriorSample s = run_sampler(d, NoisePrior{}, bh_lambda(0.3, 5), sc);
  const Vector e = expected_scaled_magnitudes(s);
  for (Eigen::Index i = 0; i + 1 < 5; ++i) CHECK(e(i) >= e(i + 1));
  CHECK((e.array() >= 0).all());
}

TEST_CASE("mcem ascent and likelihood trend") {
  const RegressionData d = fixture(100, 6, 6);
  McemConfig mc;
  mc.sampler.seed = 6;
  mc.sampler.chains = 1;
  mc.max_iterations = 20;
  mc.eps = 1e-12;
  mc.lambda_init = bh_lambda(0.2, 6);
  const McemResult r = run_mcem(d, NoisePrior{}, mc);
  CHECK(r.trace.size() == 20);
  for (const auto& st : r.trace) {
    CHECK(st.q_value >= st.q_prev - 1e-9);
    CHECK(LambdaSequence::is_valid(st.lambda_k.values()));
    for (Eigen::Index i = 0; i + 1 < st.e_hat.size(); ++i) CHECK(st.e_hat(i) >= st.e_hat(i + 1));
    CHECK(st.loglik_increment >= -2.0 * st.loglik_increment_se - 1e-9);
  }
  for (std::size_t k = 1; k < r.trace.size(); ++k) CHECK(r.trace[k].draws >= r.trace[k - 1].draws);
}

TEST_CASE("mcem settles in one dimension") {
  Rng rng = make_stream(7, 0);
  Matrix x(2000, 1);
  for (auto& v : x.reshaped()) v = standard_normal(rng);
  Vector y = 0.8 * x.col(0);
  for (Eigen::Index i = 0; i < 2000; ++i) y(i) += standard_normal(rng);
  const RegressionData d = RegressionData::standardized(x, y, Scaling::kUnitVariance);
  McemConfig mc;
  mc.sampler.seed = 7;
  mc.sampler.chains = 1;
  const McemResult r = run_mcem(d, NoisePrior{}, mc);
  CHECK(r.converged);
  CHECK_FALSE(r.stalled);
  CHECK(r.trace.size() <= 50);
  CHECK(r.trace.back().delta_norm < r.eps);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "bslope/map_solver.hpp"
#include "bslope/special.hpp"
#include "oracles.hpp"

using namespace bslope;

namespace {

Vector random_theta(std::mt19937_64& rng, Eigen::Index p, double scale = 2.0) {
  std::uniform_real_distribution<double> u(0.0, scale);
  Vector t(p);
  for (auto& v : t) v = u(rng);
  std::sort(t.data(), t.data() + p, std::greater<double>());
  return t;
}

RegressionData fixture(Eigen::Index n, Eigen::Index p, std::uint64_t seed) {
  Rng rng = make_stream(seed, 2);
  Matrix x(n, p);
  for (auto& v : x.reshaped()) v = standard_normal(rng);
  Vector beta = Vector::Zero(p);
  for (Eigen::Index j = 0; j < std::min<Eigen::Index>(p, 4); ++j) beta(j) = 2.0 - j;
  Vector y = x * beta;
  for (Eigen::Index i = 0; i < n; ++i) y(i) += standard_normal(rng);
  return RegressionData(x, y);
}

}  // namespace

TEST_CASE("pava") {
  Vector y(5);
  y << 1, 3, 2, 0, 4;
  const Vector f = pava_nonincreasing(y);
  Vector expect(5);
  expect << 2, 2, 2, 2, 2;
  CHECK((f - expect).norm() < 1e-14);
  Vector z(4);
  z << 4, 3, 3.5, -1;
  const Vector g = project_monotone_cone(z);
  Vector e2(4);
  e2 << 4, 3.25, 3.25, 0;
  CHECK((g - e2).norm() < 1e-14);
}

TEST_CASE("prox special cases") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z(0.0, 2.0);
  Vector v(6);
  for (auto& x : v) x = z(rng);
  CHECK((prox_sorted_l1(v, Vector::Zero(6)) - v).norm() < 1e-15);
  const Vector soft = prox_sorted_l1(v, Vector::Constant(6, 0.7));
  for (Eigen::Index i = 0; i < 6; ++i)
    CHECK(soft(i) == doctest::Approx(std::copysign(std::max(std::abs(v(i)) - 0.7, 0.0), v(i))).epsilon(1e-14));
  Vector v2(2), t2(2);
  v2 << 3, 1;
  t2 << 2, 1;
  const Vector p2 = prox_sorted_l1(v2, t2);
  CHECK((p2 - oracle::prox_by_min_norm(v2, t2)).norm() < 1e-9);
}

TEST_CASE("prox agrees with the min-norm-point oracle in 3 dimensions") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> z(0.0, 2.0);
  for (int t = 0; t < 200; ++t) {
    Vector v(3);
    for (auto& x : v) x = z(rng);
    const Vector th = random_theta(rng, 3);
    REQUIRE((prox_sorted_l1(v, th) - oracle::prox_by_min_norm(v, th)).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("prox is nonexpansive and keeps the magnitude order") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> z(0.0, 3.0);
  for (int t = 0; t < 1000; ++t) {
    Vector u(8), v(8);
    for (auto& x : u) x = z(rng);
    for (auto& x : v) x = z(rng);
    const Vector th = random_theta(rng, 8, 4.0);
    const Vector pu = prox_sorted_l1(u, th), pv = prox_sorted_l1(v, th);
    REQUIRE((pu - pv).norm() <= (u - v).norm() + 1e-12);
    const auto order = magnitude_order(u);
    for (std::size_t r = 0; r + 1 < order.size(); ++r)
      REQUIRE(std::abs(pu(order[r])) >= std::abs(pu(order[r + 1])) - 1e-12);
    for (Eigen::Index i = 0; i < 8; ++i) REQUIRE(pu(i) * u(i) >= 0.0);
  }
}

TEST_CASE("unpenalized fit is least squares") {
  const RegressionData d = fixture(60, 5, 1);
  const MapSolution m = fit_slope_map(d, LambdaSequence(Vector::Zero(5)), 1.0, 1e-12);
  CHECK(m.converged);
  CHECK((m.beta_hat - d.ols()).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("large penalty gives zero") {
  const RegressionData d = fixture(60, 5, 2);
  const double big = d.xty().cwiseAbs().maxCoeff() * 1.01;
  const MapSolution m = fit_slope_map(d, LambdaSequence(Vector::Constant(5, big)), 1.0);
  CHECK(m.beta_hat.norm() == 0.0);
  CHECK(m.kkt_residual <= 1e-9);
}

TEST_CASE("map is the conditional mode") {
  const RegressionData d = fixture(80, 12, 3);
  const LambdaSequence lam = bh_lambda(0.3, 12, 1.0);
  const double sigma = 1.1;
  const MapSolution m = fit_slope_map(d, lam, sigma);
  CHECK(m.converged);
  CHECK(m.kkt_residual < 1e-6);
  const double f0 = log_conditional_beta(m.beta_hat, sigma * sigma, lam, d);
  for (Eigen::Index j = 0; j < 12; ++j)
    for (double h : {-1e-4, 1e-4}) {
      Vector b = m.beta_hat;
      b(j) += h;
      CHECK(log_conditional_beta(b, sigma * sigma, lam, d) <= f0 + 1e-8);
    }
}

TEST_CASE("kkt residual flags a wrong point") {
  const RegressionData d = fixture(80, 6, 4);
  const LambdaSequence lam = bh_lambda(0.3, 6);
  const MapSolution m = fit_slope_map(d, lam, 1.0);
  CHECK(slope_kkt_residual(d, m.beta_hat, lam, 1.0) < 1e-6);
  Vector off = m.beta_hat;
  off(0) += 0.05;
  CHECK(slope_kkt_residual(d, off, lam, 1.0) > 1e-3);
  CHECK(slope_objective(d, off, lam, 1.0) > m.objective);
}

TEST_CASE("spectral norm") {
  const RegressionData d = fixture(50, 7, 5);
  Eigen::SelfAdjointEigenSolver<Matrix> es(d.gram());
  CHECK(gram_spectral_norm(d) == doctest::Approx(es.eigenvalues().maxCoeff()).epsilon(1e-9));
}

TEST_CASE("more predictors than rows") {
  const RegressionData d = fixture(20, 40, 6);
  const MapSolution m = fit_slope_map(d, bh_lambda(0.2, 40), 1.0);
  CHECK(m.converged);
  CHECK(m.kkt_residual < 1e-6);
}

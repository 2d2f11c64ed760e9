#include <cmath>
#include <cstdio>
#include <random>
#include <string>

#include "bslope/data_io.hpp"
#include "bslope/exact_posterior.hpp"
#include "bslope/experiments.hpp"
#include "bslope/lambda_inference.hpp"
#include "bslope/map_solver.hpp"
#include "bslope/samplers.hpp"
#include "bslope/summary.hpp"
#include "oracles.hpp"

using namespace bslope;

namespace {

int failures = 0;

void report(int id, bool ok, const std::string& detail) {
  std::printf("%s criterion %d: %s\n", ok ? "PASS" : "FAIL", id, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

RegressionData gaussian_fixture(Eigen::Index n, Eigen::Index p, std::uint64_t seed) {
  Rng rng = make_stream(seed, 9);
  Matrix x(n, p);
  for (auto& v : x.reshaped()) v = standard_normal(rng);
  Vector beta = Vector::Zero(p);
  beta(0) = 0.5;
  if (p > 1) beta(1) = -0.25;
  Vector y = x * beta;
  for (Eigen::Index i = 0; i < n; ++i) y(i) += standard_normal(rng);
  return RegressionData(x, y);
}

double sd_of(const Vector& v) {
  return std::sqrt((v.array() - v.mean()).square().sum() / static_cast<double>(v.size() - 1));
}

void exact_moments() {
  const RegressionData d = gaussian_fixture(50, 2, 1);
  Vector l(2);
  l << 4.0, 2.0;
  const LambdaSequence lam(l);
  const double s2 = 1.0;
  const ExactMixture m = enumerate_mixture(d, s2, lam, {6, 400000, 1});
  const PosteriorMoments pm = exact_posterior_moments(m, 400000, 2);
  double worst = 0.0;
  for (SamplerKind kind : {SamplerKind::kGibbs, SamplerKind::kHmc}) {
    SamplerConfig sc;
    sc.kind = kind;
    sc.iters = 42000;
    sc.warmup = 2000;
    sc.seed = 3;
    sc.update_sigma2 = false;
    sc.sigma2_init = s2;
    const PosteriorSample s = run_sampler(d, NoisePrior{}, lam, sc);
    for (Eigen::Index j = 0; j < 2; ++j) {
      const Vector c = s.draws.col(j);
      const double ess = effective_sample_size({c});
      const double sd = sd_of(c);
      const double mean_se = sd / std::sqrt(ess);
      const double sd_se = sd / std::sqrt(2.0 * ess);
      worst = std::max(worst, std::abs(c.mean() - pm.mean(j)) / (3.0 * (mean_se + pm.mean_se(j))));
      worst = std::max(worst, std::abs(sd - pm.sd(j)) / (3.0 * (sd_se + pm.sd_se(j))));
    }
  }
  report(1, worst < 1.0, fmt("max |sampler - exact| / 3(SE) = %.3f", worst));
}

void normalizer() {
  const double s2 = 1.7;
  const LambdaSequence l1(Vector::Constant(1, 1.3));
  const double z1 = oracle::integrate(
      [&](double b) { return std::exp(-l1[0] * std::abs(b) / std::sqrt(s2)); }, -kInf, kInf, 1e-13);
  const double e1 = std::abs(z1 * normalizing_constant(l1, s2) - 1.0);
  Vector l(2);
  l << 2.0, 0.6;
  const LambdaSequence l2(l);
  const double z2 = oracle::integrate_plane([&](double a, double b) {
    Vector v(2);
    v << a, b;
    return std::exp(-sorted_l1_norm(v, l2.values()) / std::sqrt(s2));
  });
  const double e2 = std::abs(z2 * normalizing_constant(l2, s2) - 1.0);
  report(2, std::max(e1, e2) < 1e-6, fmt("relative error p=1 %.2e, p=2 %.2e", e1, e2));
}

void concavity() {
  Rng rng0 = make_stream(4, 9);
  Matrix x(25, 5);
  for (auto& v : x.reshaped()) v = standard_normal(rng0);
  Vector y = x.col(0) * 1.5;
  for (Eigen::Index i = 0; i < 25; ++i) y(i) += 0.8 * standard_normal(rng0);
  const RegressionData d(x, y);
  const LambdaSequence lam = bh_lambda(0.4, 5);
  std::mt19937_64 g(5);
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> u(0.05, 4.0);
  long bad = 0, total = 0;
  for (const NoisePrior& prior : {NoisePrior(3.0, 2.0), NoisePrior{}}) {
    for (int t = 0; t < 10000; ++t, ++total) {
      ReparamPoint a, b, m;
      a.eta = Vector(5);
      b.eta = Vector(5);
      for (int i = 0; i < 5; ++i) {
        a.eta(i) = 2 * z(g);
        b.eta(i) = 2 * z(g);
      }
      a.psi = u(g);
      b.psi = u(g);
      m.eta = 0.5 * (a.eta + b.eta);
      m.psi = 0.5 * (a.psi + b.psi);
      const double fa = reparam_log_posterior(a, d, lam, prior);
      const double fb = reparam_log_posterior(b, d, lam, prior);
      const double fm = reparam_log_posterior(m, d, lam, prior);
      if (fm < 0.5 * (fa + fb) - 1e-9) ++bad;
    }
  }
  report(3, bad == 0, fmt("%.0f violations in %.0f segments", static_cast<double>(bad), static_cast<double>(total)));
}

void map_is_mode() {
  SimulationSpec spec;
  spec.seed = 6;
  const SimulatedData sim = simulate_experiment(spec);
  const RegressionData d = RegressionData::standardized(sim.x, sim.y, Scaling::kUnitNorm);
  const double s2 = d.sigma2_estimate();
  const LambdaSequence lam = bh_lambda(0.2, d.p());
  const MapSolution map = fit_slope_map(d, lam, std::sqrt(s2));
  const double f_map = log_conditional_beta(map.beta_hat, s2, lam, d);
  SamplerConfig sc;
  sc.iters = 12000;
  sc.warmup = 2000;
  sc.seed = 6;
  sc.update_sigma2 = false;
  sc.sigma2_init = s2;
  const PosteriorSample s = run_sampler(d, NoisePrior{}, lam, sc);
  double gap = -kInf;
  for (Eigen::Index r = 0; r < s.draws.rows(); ++r) {
    const Vector b = s.draws.row(r).head(d.p()).transpose();
    gap = std::max(gap, log_conditional_beta(b, s2, lam, d) - f_map);
  }
  report(4, gap <= 1e-8 && map.kkt_residual <= 1e-6,
         fmt("max draw - MAP log density %.3e over %.0f draws, kkt %.2e", gap,
             static_cast<double>(s.draws.rows()), map.kkt_residual));
}

void prox() {
  std::mt19937_64 g(7);
  std::normal_distribution<double> z(0.0, 2.0);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    Vector v(5), th(5);
    for (auto& x : v) x = z(g);
    for (auto& x : th) x = u(g);
    std::sort(th.data(), th.data() + 5, std::greater<double>());
    worst = std::max(worst, (prox_sorted_l1(v, th) - oracle::prox_by_min_norm(v, th)).cwiseAbs().maxCoeff());
  }
  report(5, worst < 1e-6, fmt("max abs difference %.2e over 1000 instances", worst));
}

void coverage() {
  ExperimentConfig c;
  c.protocol = "simulation-coverage";
  const CoverageResult r = run_coverage(c);
  report(6, r.non_coverage >= 0 && r.non_coverage <= 12,
         fmt("%.0f of 80 intervals miss the truth", static_cast<double>(r.non_coverage)));
}

void prediction() {
  ExperimentConfig c;
  c.protocol = "prediction-split";
  const PredictionResult r = run_prediction_split(c);
  bool ok = true;
  for (int k = 0; k < 3; ++k) ok = ok && r.mean_errors(k) >= 1.0 && r.mean_errors(k) <= 1.4;
  const double gap = std::abs(r.mean_errors(1) - r.mean_errors(0));
  ok = ok && gap < 0.1;
  report(7, ok, fmt("mean MSE slope %.3f, bayes %.3f, empirical bayes %.3f, |bayes - slope| %.3f",
                    r.mean_errors(0), r.mean_errors(1), r.mean_errors(2), gap));
}

void diabetes() {
  ExperimentConfig c;
  c.protocol = "diabetes";
  const DiabetesResult r = run_diabetes(c);
  const double bmi = r.summary.row("beta3").mean;
  const double sigma = r.summary.row("sigma").mean;
  const bool ok8 = std::abs(bmi - 465.31) <= 2.0 * 66.61 && sigma >= 55.0 && sigma <= 63.0;
  report(8, ok8, fmt("bmi mean %.2f, sigma mean %.2f", bmi, sigma));
  double worst = 0.0;
  for (const auto& row : r.diagnostics.rows) worst = std::max(worst, std::abs(row.acf(3)));
  report(9, worst < 0.05, fmt("max |lag-3 autocorrelation| %.4f", worst));
}

void lambda_checks() {
  const RegressionData d = gaussian_fixture(10, 3, 8);
  Vector l(3), b(3);
  l << 2.5, 1.2, 0.4;
  b << 1.0, -0.6, 0.2;
  const ChainState st(b, 0.8, LambdaSequence(l), d);
  const LambdaHyperPrior hp(Vector::Constant(3, 0.7), Vector::Constant(3, 0.5));
  const double cap = 8.0;
  Rng rng = make_stream(8, 0);
  double worst_tv = 0.0;
  for (Eigen::Index j = 0; j < 3; ++j) {
    const double lo = j + 1 < 3 ? l(j + 1) : 0.0, hi = j > 0 ? l(j - 1) : cap;
    auto f = [&](double x) { return std::exp(lambda_conditional_log_density(j, x, st, hp)); };
    const double z = oracle::integrate(f, lo, hi, 1e-12);
    const int bins = 50;
    const long n = 100000;
    Vector hist = Vector::Zero(bins);
    for (long t = 0; t < n; ++t) {
      const double x = sample_lambda_conditional(j, st, hp, cap, rng);
      hist(std::clamp(static_cast<int>((x - lo) / (hi - lo) * bins), 0, bins - 1)) += 1.0;
    }
    double tv = 0.0;
    for (int k = 0; k < bins; ++k) {
      const double a = lo + (hi - lo) * k / bins, e = lo + (hi - lo) * (k + 1) / bins;
      tv += std::abs(hist(k) / n - oracle::integrate(f, a, e, 1e-12) / z);
    }
    worst_tv = std::max(worst_tv, 0.5 * tv);
  }

  Rng rng2 = make_stream(6, 6);
  Matrix x(100, 6);
  for (auto& v : x.reshaped()) v = standard_normal(rng2);
  Vector y = x.col(0) - 0.5 * x.col(5);
  for (Eigen::Index i = 0; i < 100; ++i) y(i) += standard_normal(rng2);
  const RegressionData dm = RegressionData::standardized(x, y, Scaling::kUnitVariance);
  McemConfig mc;
  mc.sampler.seed = 6;
  mc.sampler.chains = 1;
  mc.max_iterations = 20;
  mc.eps = 1e-12;
  mc.lambda_init = bh_lambda(0.2, 6);
  const McemResult r = run_mcem(dm, NoisePrior{}, mc);
  double worst_step = kInf;
  for (const auto& s : r.trace) worst_step = std::min(worst_step, s.q_value - s.q_prev);
  report(10, worst_tv < 0.02 && worst_step >= -1e-9 && r.trace.size() == 20,
         fmt("lambda conditional TV %.4f, smallest Q increase %.2e over %.0f iterations", worst_tv, worst_step,
             static_cast<double>(r.trace.size())));
}

}  // namespace

int main() {
  exact_moments();
  normalizer();
  concavity();
  map_is_mode();
  prox();
  coverage();
  prediction();
  diabetes();
  lambda_checks();
  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}

#include "bslope/exact_posterior.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "bslope/special.hpp"

namespace bslope {

namespace {

Matrix standard_normal_draws(Eigen::Index p, long samples, std::uint64_t seed) {
  Rng rng = make_stream(seed, 0x6f72746eULL);
  Matrix z(p, samples);
  for (long t = 0; t < samples; ++t)
    for (Eigen::Index i = 0; i < p; ++i) z(i, t) = standard_normal(rng);
  return z;
}

// Index of every draw (column of `draws`) shifted by mu that falls in the region.
template <typename F>
void for_each_member(const OrthantComponent& c, const Matrix& shifted, F&& f) {
  for (Eigen::Index t = 0; t < shifted.cols(); ++t) {
    if (c.contains(shifted.col(t))) f(t);
  }
}

}  // namespace

bool OrthantComponent::contains(const Eigen::Ref<const Vector>& beta) const {
  const std::size_t p = tau.size();
  for (std::size_t i = 0; i < p; ++i) {
    if (s[i] * beta(static_cast<Eigen::Index>(i)) < 0.0) return false;
  }
  for (std::size_t r = 0; r + 1 < p; ++r) {
    if (std::abs(beta(tau[r])) < std::abs(beta(tau[r + 1]))) return false;
  }
  return true;
}

Vector OrthantComponent::signed_lambda(const LambdaSequence& lambda) const {
  Vector d(static_cast<Eigen::Index>(tau.size()));
  for (std::size_t r = 0; r < tau.size(); ++r) d(tau[r]) = s[static_cast<std::size_t>(tau[r])] * lambda[static_cast<Eigen::Index>(r)];
  return d;
}

double ExactMixture::density(const Vector& beta) const {
  const Eigen::Index p = beta.size();
  Eigen::LLT<Matrix> llt(precision);
  const double log_det_precision = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  for (const auto& c : components) {
    if (!c.contains(beta)) continue;
    const Vector d = beta - c.mu;
    const double log_gauss = -0.5 * d.dot(precision * d) -
                             0.5 * static_cast<double>(p) * std::log(2.0 * std::numbers::pi) +
                             0.5 * log_det_precision;
    return std::exp(c.quad - log_normalizer + log_gauss);
  }
  return 0.0;
}

MassEstimate orthant_mass(const OrthantComponent& component, const Matrix& chol, long samples,
                          std::uint64_t seed) {
  const Matrix z = standard_normal_draws(chol.rows(), samples, seed);
  const Matrix shifted = (chol * z).colwise() + component.mu;
  long hits = 0;
  for_each_member(component, shifted, [&](Eigen::Index) { ++hits; });
  const double m = static_cast<double>(hits) / static_cast<double>(samples);
  return {m, std::sqrt(m * (1.0 - m) / static_cast<double>(samples))};
}

ExactMixture enumerate_mixture(const RegressionData& data, double sigma2,
                               const LambdaSequence& lambda, const MixtureOptions& options) {
  const Eigen::Index p = data.p();
  if (p > options.max_p)
    throw DimensionTooLarge("enumerate_mixture: p = " + std::to_string(p) + " exceeds cap " +
                            std::to_string(options.max_p));
  if (!(sigma2 > 0.0)) throw DomainError("enumerate_mixture: sigma2 must be positive");
  if (lambda.size() != p) throw DimensionMismatch("enumerate_mixture: lambda length != p");

  ExactMixture mix;
  mix.sigma2 = sigma2;
  mix.beta_ols = data.ols();
  mix.precision = data.gram() / sigma2;
  mix.sigma = sigma2 * data.gram().ldlt().solve(Matrix::Identity(p, p));
  mix.sigma = 0.5 * (mix.sigma + mix.sigma.transpose());
  mix.chol = mix.sigma.llt().matrixL();
  const double sigma = std::sqrt(sigma2);

  std::vector<int> perm(static_cast<std::size_t>(p));
  std::iota(perm.begin(), perm.end(), 0);
  do {
    for (long mask = 0; mask < (1L << p); ++mask) {
      OrthantComponent c;
      c.tau = perm;
      c.s.resize(static_cast<std::size_t>(p));
      for (Eigen::Index i = 0; i < p; ++i) c.s[static_cast<std::size_t>(i)] = (mask >> i) & 1 ? -1 : 1;
      c.mu = mix.beta_ols - mix.sigma * c.signed_lambda(lambda) / sigma;
      c.quad = 0.5 * c.mu.dot(mix.precision * c.mu);
      mix.components.push_back(std::move(c));
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  // Common random numbers: every component sees the same standard normal draws.
  const long n_draws = options.mass_draws;
  const Matrix z = standard_normal_draws(p, n_draws, options.seed);
  const Matrix lz = mix.chol * z;
  double qmax = -kInf;
  for (const auto& c : mix.components) qmax = std::max(qmax, c.quad);
  Vector per_draw = Vector::Zero(n_draws);
  for (auto& c : mix.components) {
    const Matrix shifted = lz.colwise() + c.mu;
    long hits = 0;
    const double w = std::exp(c.quad - qmax);
    for_each_member(c, shifted, [&](Eigen::Index t) {
      ++hits;
      per_draw(t) += w;
    });
    c.mass = static_cast<double>(hits) / static_cast<double>(n_draws);
    c.mass_se = std::sqrt(c.mass * (1.0 - c.mass) / static_cast<double>(n_draws));
  }
  std::vector<double> logs;
  logs.reserve(mix.components.size());
  for (const auto& c : mix.components) logs.push_back(c.mass > 0.0 ? c.quad + std::log(c.mass) : -kInf);
  mix.log_normalizer = log_sum_exp(logs);
  for (std::size_t k = 0; k < logs.size(); ++k) mix.components[k].log_weight = logs[k] - mix.log_normalizer;

  const double mean_b = per_draw.mean();
  const double var_b = (per_draw.array() - mean_b).square().sum() / static_cast<double>(n_draws - 1);
  mix.log_normalizer_se = std::sqrt(var_b / static_cast<double>(n_draws)) / mean_b;
  return mix;
}

PosteriorMoments exact_posterior_moments(const ExactMixture& mixture, long samples,
                                         std::uint64_t seed) {
  const Eigen::Index p = mixture.beta_ols.size();
  const Matrix z = standard_normal_draws(p, samples, seed);
  const Matrix lz = mixture.chol * z;
  double qmax = -kInf;
  for (const auto& c : mixture.components) qmax = std::max(qmax, c.quad);

  // Per-draw sums over components of w_c 1[in O_c], w_c beta, w_c beta beta'.
  Vector b = Vector::Zero(samples);
  Matrix a = Matrix::Zero(p, samples);
  Matrix sq = Matrix::Zero(p, samples);  // diagonal second moments per draw
  Matrix cross = Matrix::Zero(p, p);
  for (const auto& c : mixture.components) {
    const double w = std::exp(c.quad - qmax);
    if (w == 0.0) continue;
    const Matrix shifted = lz.colwise() + c.mu;
    for_each_member(c, shifted, [&](Eigen::Index t) {
      b(t) += w;
      a.col(t) += w * shifted.col(t);
      sq.col(t) += w * shifted.col(t).cwiseAbs2();
      cross += w * shifted.col(t) * shifted.col(t).transpose();
    });
  }
  const double n = static_cast<double>(samples);
  const double bbar = b.mean();
  if (!(bbar > 0.0)) throw DomainError("exact_posterior_moments: no Monte Carlo draw landed in any region");

  PosteriorMoments out;
  out.mean = a.rowwise().mean() / bbar;
  const Matrix second = cross / (n * bbar);
  out.covariance = second - out.mean * out.mean.transpose();
  out.mean_se.resize(p);
  out.sd.resize(p);
  out.sd_se.resize(p);
  for (Eigen::Index i = 0; i < p; ++i) {
    const Eigen::ArrayXd infl_mean = (a.row(i).transpose().array() - out.mean(i) * b.array()) / bbar;
    out.mean_se(i) = std::sqrt((infl_mean - infl_mean.mean()).square().sum() / (n - 1.0) / n);
    const double var_i = out.covariance(i, i);
    out.sd(i) = std::sqrt(std::max(var_i, 0.0));
    const Eigen::ArrayXd infl_var =
        (sq.row(i).transpose().array() - second(i, i) * b.array()) / bbar - 2.0 * out.mean(i) * infl_mean;
    const double var_var = (infl_var - infl_var.mean()).square().sum() / (n - 1.0) / n;
    out.sd_se(i) = std::sqrt(var_var) / (2.0 * std::max(out.sd(i), 1e-300));
  }
  return out;
}

}  // namespace bslope

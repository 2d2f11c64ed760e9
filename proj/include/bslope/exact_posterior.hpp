#ifndef BSLOPE_EXACT_POSTERIOR_HPP
#define BSLOPE_EXACT_POSTERIOR_HPP

#include <cstdint>
#include <vector>

#include "bslope/model.hpp"

namespace bslope {

/// Region O_{tau,s}: sign(beta_i) = s_i and |beta_tau(1)| >= ... >= |beta_tau(p)|.
struct OrthantComponent {
  std::vector<int> tau;  ///< 0-based permutation, tau[r] = coordinate holding rank r
  std::vector<int> s;    ///< signs in {-1, +1}
  Vector mu;             ///< beta_OLS - Sigma D lambda / sigma
  double quad = 0.0;     ///< 1/2 mu' Sigma^{-1} mu
  double mass = 0.0;     ///< Gaussian mass of the region under N(mu, Sigma)
  double mass_se = 0.0;
  double log_weight = 0.0;  ///< log of the component probability; these sum to 1

  bool contains(const Eigen::Ref<const Vector>& beta) const;
  /// D_{tau,s} lambda: entry tau[r] is s[tau[r]] * lambda_r.
  Vector signed_lambda(const LambdaSequence& lambda) const;
};

struct MassEstimate {
  double value = 0.0;
  double se = 0.0;
};

struct ExactMixture {
  std::vector<OrthantComponent> components;
  Matrix sigma;      ///< sigma2 (X'X)^{-1}
  Matrix precision;  ///< X'X / sigma2
  Matrix chol;       ///< lower Cholesky factor of sigma
  Vector beta_ols;
  double sigma2 = 1.0;
  double log_normalizer = 0.0;  ///< log sum_c exp(quad_c) m_c
  double log_normalizer_se = 0.0;

  /// Normalized posterior density at beta.
  double density(const Vector& beta) const;
};

struct MixtureOptions {
  int max_p = 6;
  long mass_draws = 100000;
  std::uint64_t seed = 20240601;
};

/// All 2^p p! orthant components with Monte Carlo masses (common random numbers).
/// Throws DimensionTooLarge above options.max_p and RankDeficient when X'X is singular.
ExactMixture enumerate_mixture(const RegressionData& data, double sigma2,
                               const LambdaSequence& lambda, const MixtureOptions& options = {});

/// Monte Carlo Gaussian mass of the component's region under N(component.mu, Sigma).
/// `chol` is the lower Cholesky factor of Sigma.
MassEstimate orthant_mass(const OrthantComponent& component, const Matrix& chol, long samples,
                          std::uint64_t seed);

struct PosteriorMoments {
  Vector mean;
  Vector mean_se;
  Matrix covariance;
  Vector sd;
  Vector sd_se;
};

/// Posterior mean and covariance by mixing truncated component moments; MC standard
/// errors come from the ratio-estimator delta method over the common draws.
PosteriorMoments exact_posterior_moments(const ExactMixture& mixture, long samples,
                                         std::uint64_t seed);

}  // namespace bslope

#endif  // BSLOPE_EXACT_POSTERIOR_HPP

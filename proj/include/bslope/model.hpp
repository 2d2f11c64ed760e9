#ifndef BSLOPE_MODEL_HPP
#define BSLOPE_MODEL_HPP

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "bslope/errors.hpp"
#include "bslope/sorted_l1.hpp"

namespace bslope {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Column scaling applied after centering.
enum class Scaling {
  kNone,          ///< use X and y as given
  kUnitNorm,      ///< centered columns with unit Euclidean norm (lars convention)
  kUnitVariance,  ///< centered columns with unit sample standard deviation
};

/// Parameters needed to map new raw rows into the fitted coordinates.
struct Standardization {
  Scaling scaling = Scaling::kNone;
  Vector center;  ///< column means of the training X
  Vector scale;   ///< divisor applied after centering
  double y_center = 0.0;

  Matrix apply(const Matrix& raw_x) const;
  /// Coefficients on the original predictor scale.
  Vector unscale_beta(const Vector& beta) const;
};

/// Response, design and cached Gram quantities. Immutable after construction.
class RegressionData {
 public:
  RegressionData(Matrix x, Vector y);

  /// Centers y and the columns of x, then scales columns per `scaling`.
  /// Throws ConstantColumn when a predictor has zero spread.
  static RegressionData standardized(const Matrix& x, const Vector& y, Scaling scaling);

  const Matrix& x() const { return x_; }
  const Vector& y() const { return y_; }
  Eigen::Index n() const { return x_.rows(); }
  Eigen::Index p() const { return x_.cols(); }
  const Matrix& gram() const { return gram_; }
  const Vector& xty() const { return xty_; }
  double yty() const { return yty_; }
  const std::optional<Standardization>& standardization() const { return standardization_; }

  /// ||y - X beta||^2 through the Gram form, O(p^2).
  double rss(const Vector& beta) const;

  /// RSS/(n - p) from least squares when n > p, else the sample variance of y.
  double sigma2_estimate() const;

  /// Least-squares coefficients; throws RankDeficient if X'X is singular.
  Vector ols() const;

 private:
  Matrix x_;
  Vector y_;
  Matrix gram_;
  Vector xty_;
  double yty_ = 0.0;
  std::optional<Standardization> standardization_;
};

/// Nonincreasing, nonnegative penalty vector.
class LambdaSequence {
 public:
  LambdaSequence() = default;
  explicit LambdaSequence(Vector values);

  const Vector& values() const { return values_; }
  double operator[](Eigen::Index i) const { return values_(i); }
  Eigen::Index size() const { return values_.size(); }

  /// lambda_1 + ... + lambda_i for every i.
  Vector partial_sums() const;
  /// True when every leading partial sum is positive (proper prior).
  bool proper() const;

  static bool is_valid(const Vector& values);

 private:
  Vector values_;
};

/// Inverse-gamma(a, gamma) prior on sigma^2; a = gamma = 0 is the improper 1/sigma^2.
struct NoisePrior {
  double a = 0.0;
  double gamma = 0.0;

  NoisePrior() = default;
  NoisePrior(double a_, double gamma_);

  bool improper() const { return a == 0.0 && gamma == 0.0; }
  /// Normalized inverse-gamma log density when a, gamma > 0; otherwise the
  /// kernel -(a+1) log sigma2 - gamma/sigma2.
  double log_density(double sigma2) const;
};

/// pi(lambda) ∝ exp(-sum b_i lambda_i) prod_i (lambda_1 + ... + lambda_i)^{c_i} on the
/// monotone cone; proper when every b_i > 0 and c_i >= 0.
struct LambdaHyperPrior {
  Vector b;
  Vector c;

  LambdaHyperPrior() = default;
  LambdaHyperPrior(Vector b_, Vector c_);

  /// b_i = 1 / lambda_i, c_i = 0. Requires a strictly positive sequence.
  static LambdaHyperPrior reciprocal(const LambdaSequence& lambda);
};

/// One MCMC state.
struct ChainState {
  Vector beta;
  double sigma2 = 1.0;
  LambdaSequence lambda;
  Vector residual;  ///< y - X beta

  ChainState() = default;
  ChainState(Vector beta_, double sigma2_, LambdaSequence lambda_, const RegressionData& data);

  void refresh_residual(const RegressionData& data);
};

/// (eta, psi) = (beta / sigma, 1 / sigma).
struct ReparamPoint {
  Vector eta;
  double psi = 1.0;

  static ReparamPoint from_natural(const Vector& beta, double sigma2);
  Vector beta() const;
  double sigma2() const;
};

double log_normalizing_constant(const LambdaSequence& lambda, double sigma2);
/// Exponentiated log_normalizing_constant; may underflow or overflow for large p.
double normalizing_constant(const LambdaSequence& lambda, double sigma2);

double log_prior_beta(const Vector& beta, double sigma2, const LambdaSequence& lambda);

/// log pi(beta | y, sigma2, lambda) without the beta-free constant:
/// -||y - X beta||^2 / (2 sigma2) - J_lambda(beta) / sigma.
double log_conditional_beta(const Vector& beta, double sigma2, const LambdaSequence& lambda,
                            const RegressionData& data);

/// log pi(beta, sigma2 | y, lambda) + const, where the dropped constant is
/// (n/2) log(2 pi) + log p(y | lambda). Uses the cached residual of `state`.
double log_posterior(const ChainState& state, const RegressionData& data, const NoisePrior& prior);

enum class BhVariant {
  kQuantile,   ///< lambda_i = Phi^{-1}(1 - i q / (2p))
  kLiteralCdf  ///< lambda_i = Phi(1 - i q / (2p))
};

/// Benjamini-Hochberg style penalty sequence, clipped below at 0.
LambdaSequence bh_lambda(double q, Eigen::Index p, double sigma_scale = 1.0,
                         BhVariant variant = BhVariant::kQuantile);

/// Concave log posterior in (eta, psi). Equals log_posterior at the mapped
/// (beta, sigma2) minus reparam_offset(lambda).
double reparam_log_posterior(const ReparamPoint& point, const RegressionData& data,
                             const LambdaSequence& lambda, const NoisePrior& prior);

/// sum_i log(lambda_1 + ... + lambda_i) - p log 2 - log p!
double reparam_offset(const LambdaSequence& lambda);

}  // namespace bslope

#endif  // BSLOPE_MODEL_HPP

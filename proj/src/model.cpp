#include "bslope/model.hpp"

#include <cmath>
#include <numbers>

#include "bslope/special.hpp"

namespace bslope {

Matrix Standardization::apply(const Matrix& raw_x) const {
  if (raw_x.cols() != center.size()) throw DimensionMismatch("Standardization: column count");
  Matrix out = raw_x.rowwise() - center.transpose();
  return out.array().rowwise() / scale.transpose().array();
}

Vector Standardization::unscale_beta(const Vector& beta) const {
  return beta.cwiseQuotient(scale);
}

RegressionData::RegressionData(Matrix x, Vector y) : x_(std::move(x)), y_(std::move(y)) {
  if (x_.rows() != y_.size()) throw DimensionMismatch("RegressionData: X rows != length of y");
  if (x_.rows() == 0 || x_.cols() == 0) throw DimensionMismatch("RegressionData: empty design");
  gram_.noalias() = x_.transpose() * x_;
  xty_.noalias() = x_.transpose() * y_;
  yty_ = y_.squaredNorm();
}

RegressionData RegressionData::standardized(const Matrix& x, const Vector& y, Scaling scaling) {
  Standardization st;
  st.scaling = scaling;
  const Eigen::Index n = x.rows();
  if (scaling == Scaling::kNone) {
    st.center = Vector::Zero(x.cols());
    st.scale = Vector::Ones(x.cols());
    RegressionData data(x, y);
    data.standardization_ = std::move(st);
    return data;
  }
  st.center = x.colwise().mean().transpose();
  st.y_center = y.mean();
  Matrix centered = x.rowwise() - st.center.transpose();
  st.scale.resize(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    double s = centered.col(j).norm();
    if (scaling == Scaling::kUnitVariance) s /= std::sqrt(static_cast<double>(n - 1));
    if (!(s > 0.0)) throw ConstantColumn("column " + std::to_string(j) + " has zero variance");
    st.scale(j) = s;
    centered.col(j) /= s;
  }
  RegressionData data(std::move(centered), y.array() - st.y_center);
  data.standardization_ = std::move(st);
  return data;
}

double RegressionData::rss(const Vector& beta) const {
  return std::max(0.0, yty_ - 2.0 * beta.dot(xty_) + beta.dot(gram_ * beta));
}

Vector RegressionData::ols() const {
  Eigen::LDLT<Matrix> ldlt(gram_);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram_, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo > 1e12) throw RankDeficient("X'X is singular or ill-conditioned");
  return ldlt.solve(xty_);
}

double RegressionData::sigma2_estimate() const {
  if (n() > p()) {
    try {
      const Vector b = ols();
      const double r = (y_ - x_ * b).squaredNorm();
      return r / static_cast<double>(n() - p());
    } catch (const RankDeficient&) {
    }
  }
  const double mean = y_.mean();
  return (y_.array() - mean).square().sum() / static_cast<double>(std::max<Eigen::Index>(n() - 1, 1));
}

LambdaSequence::LambdaSequence(Vector values) : values_(std::move(values)) {
  if (!is_valid(values_)) throw DomainError("LambdaSequence must be nonincreasing and nonnegative");
}

bool LambdaSequence::is_valid(const Vector& values) {
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values(i)) || values(i) < 0.0) return false;
    if (i > 0 && values(i) > values(i - 1)) return false;
  }
  return true;
}

Vector LambdaSequence::partial_sums() const {
  Vector s(values_.size());
  double acc = 0.0;
  for (Eigen::Index i = 0; i < values_.size(); ++i) s(i) = (acc += values_(i));
  return s;
}

bool LambdaSequence::proper() const { return values_.size() > 0 && values_(0) > 0.0; }

NoisePrior::NoisePrior(double a_, double gamma_) : a(a_), gamma(gamma_) {
  if (!(a >= 0.0) || !(gamma >= 0.0)) throw DomainError("NoisePrior requires a >= 0, gamma >= 0");
}

double NoisePrior::log_density(double sigma2) const {
  if (!(sigma2 > 0.0)) return -kInf;
  const double kernel = -(a + 1.0) * std::log(sigma2) - gamma / sigma2;
  if (a > 0.0 && gamma > 0.0) return kernel + a * std::log(gamma) - std::lgamma(a);
  return kernel;
}

ChainState::ChainState(Vector beta_, double sigma2_, LambdaSequence lambda_,
                       const RegressionData& data)
    : beta(std::move(beta_)), sigma2(sigma2_), lambda(std::move(lambda_)) {
  if (!(sigma2 > 0.0)) throw DomainError("ChainState: sigma2 must be positive");
  if (beta.size() != data.p() || lambda.size() != data.p())
    throw DimensionMismatch("ChainState: beta/lambda length != p");
  refresh_residual(data);
}

void ChainState::refresh_residual(const RegressionData& data) {
  residual = data.y() - data.x() * beta;
}

ReparamPoint ReparamPoint::from_natural(const Vector& beta, double sigma2) {
  if (!(sigma2 > 0.0)) throw DomainError("ReparamPoint: sigma2 must be positive");
  const double sigma = std::sqrt(sigma2);
  return {beta / sigma, 1.0 / sigma};
}

Vector ReparamPoint::beta() const { return eta / psi; }

double ReparamPoint::sigma2() const { return 1.0 / (psi * psi); }

double log_normalizing_constant(const LambdaSequence& lambda, double sigma2) {
  if (!(sigma2 > 0.0)) throw DomainError("normalizing constant: sigma2 must be positive");
  if (!lambda.proper()) throw ImproperPrior("leading partial sum of lambda is zero");
  const double p = static_cast<double>(lambda.size());
  return reparam_offset(lambda) - 0.5 * p * std::log(sigma2);
}

double normalizing_constant(const LambdaSequence& lambda, double sigma2) {
  return std::exp(log_normalizing_constant(lambda, sigma2));
}

double reparam_offset(const LambdaSequence& lambda) {
  if (!lambda.proper()) throw ImproperPrior("leading partial sum of lambda is zero");
  const double p = static_cast<double>(lambda.size());
  return lambda.partial_sums().array().log().sum() - p * std::numbers::ln2 - std::lgamma(p + 1.0);
}

double log_prior_beta(const Vector& beta, double sigma2, const LambdaSequence& lambda) {
  if (beta.size() != lambda.size()) throw DimensionMismatch("log_prior_beta: size mismatch");
  return log_normalizing_constant(lambda, sigma2) -
         sorted_l1_norm(beta, lambda.values()) / std::sqrt(sigma2);
}

double log_conditional_beta(const Vector& beta, double sigma2, const LambdaSequence& lambda,
                            const RegressionData& data) {
  const double rss = (data.y() - data.x() * beta).squaredNorm();
  return -rss / (2.0 * sigma2) - sorted_l1_norm(beta, lambda.values()) / std::sqrt(sigma2);
}

double log_posterior(const ChainState& state, const RegressionData& data, const NoisePrior& prior) {
  const double n = static_cast<double>(data.n());
  return -0.5 * n * std::log(state.sigma2) - state.residual.squaredNorm() / (2.0 * state.sigma2) +
         log_prior_beta(state.beta, state.sigma2, state.lambda) + prior.log_density(state.sigma2);
}

LambdaSequence bh_lambda(double q, Eigen::Index p, double sigma_scale, BhVariant variant) {
  if (!(q > 0.0 && q < 2.0)) throw DomainError("bh_lambda: q must lie in (0, 2)");
  if (p <= 0) throw DomainError("bh_lambda: p must be positive");
  if (!(sigma_scale > 0.0)) throw DomainError("bh_lambda: sigma_scale must be positive");
  Vector v(p);
  const double pp = static_cast<double>(p);
  for (Eigen::Index i = 0; i < p; ++i) {
    const double arg = 1.0 - static_cast<double>(i + 1) * q / (2.0 * pp);
    const double raw = variant == BhVariant::kQuantile ? normal_quantile(arg) : normal_cdf(arg);
    v(i) = std::max(0.0, raw) * sigma_scale;
  }
  // Quantiles are monotone already; this only removes rounding wiggles.
  for (Eigen::Index i = 1; i < p; ++i) v(i) = std::min(v(i), v(i - 1));
  return LambdaSequence(std::move(v));
}

double reparam_log_posterior(const ReparamPoint& point, const RegressionData& data,
                             const LambdaSequence& lambda, const NoisePrior& prior) {
  if (!(point.psi > 0.0)) throw DomainError("reparam_log_posterior: psi must be positive");
  const double psi2 = point.psi * point.psi;
  const double n = static_cast<double>(data.n());
  const double p = static_cast<double>(data.p());
  const double quad = (point.psi * data.y() - data.x() * point.eta).squaredNorm();
  return prior.log_density(1.0 / psi2) + 0.5 * (n + p) * std::log(psi2) - 0.5 * quad -
         sorted_l1_norm(point.eta, lambda.values());
}

}  // namespace bslope

namespace bslope {

LambdaHyperPrior::LambdaHyperPrior(Vector b_, Vector c_) : b(std::move(b_)), c(std::move(c_)) {
  if (b.size() != c.size()) throw DimensionMismatch("LambdaHyperPrior: b and c lengths differ");
  if (!(b.array() > 0.0).all() || !(c.array() >= 0.0).all())
    throw DomainError("LambdaHyperPrior requires b_i > 0 and c_i >= 0");
}

LambdaHyperPrior LambdaHyperPrior::reciprocal(const LambdaSequence& lambda) {
  if (!(lambda.values().array() > 0.0).all())
    throw DomainError("LambdaHyperPrior::reciprocal needs a strictly positive lambda");
  return {lambda.values().cwiseInverse(), Vector::Zero(lambda.size())};
}

}  // namespace bslope

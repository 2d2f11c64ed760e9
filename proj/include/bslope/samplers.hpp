#ifndef BSLOPE_SAMPLERS_HPP
#define BSLOPE_SAMPLERS_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bslope/model.hpp"
#include "bslope/special.hpp"

namespace bslope {

// ---------------------------------------------------------------------------
// Coordinate conditionals of beta_j | beta_{-j}, sigma2, lambda, y.

/// The 2p truncated-normal pieces of one coordinate's full conditional. Piece
/// (s = +1, k) lives on [x_k, x_{k-1}), piece (s = -1, k) on (-x_{k-1}, -x_k],
/// with x_0 = inf, x_p = 0 and x_1 >= ... >= x_{p-1} the other |beta_i|.
struct ConditionalPieces {
  Eigen::Index j = 0;
  Vector breakpoints;  ///< x_0 .. x_p (length p + 1)
  Matrix means;        ///< 2 x p; row 0 is s = +1, row 1 is s = -1; column k-1
  Matrix log_weights;  ///< same layout, normalized (log-sum-exp = 0)
  double precision = 1.0;  ///< omega_jj = ||x_j||^2 / sigma2

  Eigen::Index p() const { return means.cols(); }
  double lower(int sign_row, Eigen::Index k) const;  ///< piece bounds, k is 1-based
  double upper(int sign_row, Eigen::Index k) const;
};

ConditionalPieces conditional_beta_pieces(Eigen::Index j, const ChainState& state,
                                          const RegressionData& data, double sigma2);

struct PieceDraw {
  double value = 0.0;
  int sign = 1;         ///< +1 or -1
  Eigen::Index k = 1;   ///< 1-based rank slot
};

PieceDraw draw_piecewise_normal(const ConditionalPieces& pieces, Rng& rng);
double sample_piecewise_normal(const ConditionalPieces& pieces, Rng& rng);

// ---------------------------------------------------------------------------
// sigma2 | beta, lambda, y  ∝ (sigma2)^{-a*-1} exp(-gamma*/sigma2 - alpha*/sigma)

struct Sigma2Conditional {
  double a_star = 0.0;
  double gamma_star = 0.0;
  double alpha_star = 0.0;

  static Sigma2Conditional from_state(const Vector& beta, const LambdaSequence& lambda,
                                      const RegressionData& data, const NoisePrior& prior);
  /// Unnormalized log density in sigma2.
  double log_density(double sigma2) const;
  bool proper() const;
};

enum class Sigma2Method { kAuto, kSlice, kRejection };

/// Slice sampling on log sigma2 (20 stepping-out updates from `current`, or from the
/// mode when current is not positive) or exact rejection from the inverse-gamma
/// envelope. kAuto uses rejection when exp(-alpha*/sqrt(mode)) > 0.1.
double sample_sigma2(const Sigma2Conditional& cond, Rng& rng, double current = -1.0,
                     Sigma2Method method = Sigma2Method::kAuto);

// ---------------------------------------------------------------------------
// Hamiltonian Monte Carlo for the beta block.

struct HmcConfig {
  int leapfrog_steps = 0;   ///< fixed count when > 0, else integration_time / step size
  double integration_time = 3.0;
  int max_leapfrog_steps = 1024;
  double step_size = 0.25;  ///< initial value; adapted during warmup when `adapt`
  bool adapt = true;
  double target_accept = 0.8;
  double jitter = 0.5;      ///< step size drawn from [1-jitter, 1+jitter] * step_size
  bool gram_metric = true;  ///< mass matrix X'X / sigma2 when X'X is positive definite
  bool adapt_metric = true; ///< dense inverse metric from a warmup covariance window
  // lambda block of the extended sampler
  int lambda_leapfrog_steps = 16;
  double lambda_step_size = 0.1;

  int steps_for(double step) const;
};

struct HmcStats {
  bool accepted = false;
  double accept_prob = 0.0;
  double delta_h = 0.0;
  bool divergent = false;
};

/// Nesterov dual averaging of log step size toward a target acceptance rate.
class DualAveraging {
 public:
  DualAveraging(double initial_step, double target);
  void update(double accept_prob);
  double current() const { return std::exp(log_step_); }
  double final_step() const { return std::exp(log_step_bar_); }

 private:
  double mu_;
  double target_;
  double log_step_;
  double log_step_bar_ = 0.0;
  double h_bar_ = 0.0;
  long t_ = 0;
};

/// One HMC transition for beta | sigma2, lambda, y with sub-gradients of the sorted-l1
/// term and an exact Metropolis correction.
class HmcBetaKernel {
 public:
  HmcBetaKernel(const RegressionData& data, const HmcConfig& config);

  /// steps = 0 uses config.steps_for(step_size).
  HmcStats transition(Vector& beta, double sigma2, const LambdaSequence& lambda, double step_size,
                      Rng& rng, int steps = 0) const;

  double potential(const Vector& beta, double sigma2, const LambdaSequence& lambda) const;
  Vector gradient(const Vector& beta, double sigma2, const LambdaSequence& lambda) const;
  bool uses_gram_metric() const { return metric_ == Metric::kGram; }
  Eigen::Index dim() const { return data_.p(); }

  /// Replaces the metric by a fixed inverse mass matrix (a beta covariance estimate).
  /// Throws DomainError unless `cov` is symmetric positive definite.
  void set_inverse_metric(const Matrix& cov);
  /// The inverse mass matrix at sigma2.
  Matrix inverse_metric(double sigma2) const;

 private:
  enum class Metric { kGram, kDiagonal, kCovariance };
  const RegressionData& data_;
  HmcConfig config_;
  Metric metric_ = Metric::kDiagonal;
  Matrix chol_;       ///< lower factor of X'X (kGram) or of the inverse metric (kCovariance)
  Vector diag_;       ///< diagonal of X'X (kDiagonal)
};

/// One proposal at config.step_size; returns the accepted or retained beta.
Vector hmc_beta_block(const ChainState& state, const RegressionData& data, double sigma2,
                      const HmcConfig& config, Rng& rng, HmcStats* stats = nullptr);

// ---------------------------------------------------------------------------
// lambda | beta, sigma2 under the hyperprior.

struct LambdaDrawStats {
  long attempts = 0;
  long fallbacks = 0;
};

/// Draw lambda_j (0-based j) from
///   exp(-(b_j + |beta|_(j)/sigma) lambda_j) prod_{i>=j} (lambda_1+...+lambda_i)^{c_i+1}
/// on [lambda_{j+1}, lambda_{j-1}] (lambda_{p+1} = 0, lambda_0 = cap) by rejection from
/// a truncated exponential with the envelope obtained by substituting the upper bracket.
/// After `max_attempts` rejections a slice update from the current value is used instead.
double sample_lambda_conditional(Eigen::Index j, const ChainState& state,
                                 const LambdaHyperPrior& hyper, double cap, Rng& rng,
                                 long max_attempts = 500, LambdaDrawStats* stats = nullptr);

/// Unnormalized log density of the lambda_j conditional at x (for tests and fallbacks).
double lambda_conditional_log_density(Eigen::Index j, double x, const ChainState& state,
                                      const LambdaHyperPrior& hyper);

/// Acceptance probability of the rejection step at x, always in [0, 1].
double lambda_acceptance_ratio(Eigen::Index j, double x, const ChainState& state,
                               const LambdaHyperPrior& hyper, double cap);

// ---------------------------------------------------------------------------
// Chains.

struct GibbsOptions {
  Sigma2Method sigma2_method = Sigma2Method::kAuto;
  bool update_sigma2 = true;
};

/// One systematic scan beta_1..beta_p followed by sigma2.
ChainState gibbs_sweep(ChainState state, const RegressionData& data, const NoisePrior& prior,
                       Rng& rng, const GibbsOptions& options = {});

enum class SamplerKind { kGibbs, kHmc };
enum class LambdaUpdate { kCoordinate, kHmc };

struct SamplerConfig {
  SamplerKind kind = SamplerKind::kHmc;
  long iters = 2000;
  long warmup = -1;  ///< -1: iters / 2
  int chains = 1;
  std::uint64_t seed = 1;
  HmcConfig hmc;
  Sigma2Method sigma2_method = Sigma2Method::kAuto;
  bool update_sigma2 = true;
  std::optional<Vector> beta_init;
  std::optional<double> sigma2_init;
  std::optional<double> step_size_init;  ///< skips re-adaptation from scratch when set
  std::optional<Matrix> inverse_metric_init;  ///< starting inverse mass matrix for beta
  LambdaUpdate lambda_update = LambdaUpdate::kCoordinate;
  long lambda_max_attempts = 500;
  std::optional<LambdaSequence> lambda_init;  ///< extended sampler; default lambda_BH(0.2)
  bool parallel = true;

  long warmup_iters() const { return warmup >= 0 ? warmup : iters / 2; }
};

struct ChainMeta {
  double accept_rate = 0.0;
  double step_size = 0.0;
  long divergences = 0;
  double mean_abs_delta_h = 0.0;
  double mean_delta_h = 0.0;
  long lambda_fallbacks = 0;
  double lambda_cap = 0.0;
  Matrix inverse_metric;  ///< beta metric in use after warmup (at the final sigma2 for X'X)
  Vector final_beta;
  double final_sigma2 = 0.0;
  Vector final_lambda;
};

/// Retained draws. Rows are chain-major: chain c occupies rows
/// [c * draws_per_chain, (c + 1) * draws_per_chain). Columns: beta_1..beta_p, sigma2,
/// then lambda_1..lambda_p when has_lambda.
struct PosteriorSample {
  Matrix draws;
  Eigen::Index p = 0;
  bool has_lambda = false;
  int chains = 1;
  long iters = 0;
  long warmup = 0;
  std::uint64_t seed = 0;
  std::string sampler;
  std::vector<ChainMeta> chain_meta;

  long draws_per_chain() const { return iters - warmup; }
  Eigen::Index sigma2_column() const { return p; }
  Eigen::Index lambda_column(Eigen::Index i) const { return p + 1 + i; }
  std::vector<std::string> column_names() const;
  Vector beta_mean() const;
};

/// Starting point (beta_SLOPE at sigma_hat, sigma_hat^2) unless overridden in config.
ChainState initial_state(const RegressionData& data, const LambdaSequence& lambda,
                         const SamplerConfig& config);

/// Systematic-scan coordinate Gibbs chains.
PosteriorSample run_gibbs(const RegressionData& data, const NoisePrior& prior,
                          const LambdaSequence& lambda, const SamplerConfig& config);

/// HMC-within-Gibbs: beta block by HMC, then sigma2.
PosteriorSample run_block_gibbs(const RegressionData& data, const NoisePrior& prior,
                                const LambdaSequence& lambda, const SamplerConfig& config);

/// run_gibbs or run_block_gibbs per config.kind.
PosteriorSample run_sampler(const RegressionData& data, const NoisePrior& prior,
                            const LambdaSequence& lambda, const SamplerConfig& config);

/// Block sampler with a lambda block each iteration (coordinate rejection sweep or HMC
/// on log increments), started at (beta_SLOPE, sigma_hat^2, lambda_BH).
PosteriorSample run_extended_gibbs(const RegressionData& data, const NoisePrior& prior,
                                   const LambdaHyperPrior& hyper, const SamplerConfig& config);

}  // namespace bslope

#endif  // BSLOPE_SAMPLERS_HPP

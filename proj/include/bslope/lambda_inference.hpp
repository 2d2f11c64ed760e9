#ifndef BSLOPE_LAMBDA_INFERENCE_HPP
#define BSLOPE_LAMBDA_INFERENCE_HPP

#include <optional>
#include <vector>

#include "bslope/model.hpp"
#include "bslope/samplers.hpp"

namespace bslope {

/// Q(lambda) = sum_i log(lambda_1 + ... + lambda_i) - sum_i lambda_i e_i.
/// Throws ImproperPrior when a leading partial sum is zero.
double q_function(const LambdaSequence& lambda, const Vector& e_hat);

/// dQ/dlambda_k = sum_{i>=k} 1 / S_i - e_k.
Vector q_gradient(const LambdaSequence& lambda, const Vector& e_hat);

struct QMaximum {
  LambdaSequence lambda;
  double q = 0.0;
  long iterations = 0;
  bool converged = false;
};

/// Projected gradient ascent with Armijo backtracking on the monotone cone.
/// Stops when ||P(lambda + grad Q) - lambda|| < tol or after max_iter steps.
QMaximum maximize_q(const Vector& e_hat, const LambdaSequence& lambda_init, double tol = 1e-8,
                    long max_iter = 10000);

/// Mean over draws of sorted(|beta|) / sigma.
Vector expected_scaled_magnitudes(const PosteriorSample& sample);

struct McemConfig {
  SamplerConfig sampler;          ///< iters/warmup are replaced per iteration
  long initial_draws = 200;
  double growth = 1.5;
  long max_draws = 2000;
  int max_iterations = 50;
  std::optional<double> eps;      ///< default 1e-3 ||lambda_BH||
  double bh_q = 0.2;
  std::optional<LambdaSequence> lambda_init;  ///< default lambda_BH(bh_q)
  long first_warmup = 1000;
  long warm_warmup = 200;         ///< warmup once chains restart from the previous state
  int stall_window = 10;
};

struct McemState {
  int iteration = 0;
  LambdaSequence lambda_prev;  ///< lambda^{k-1}, used to draw the sample
  LambdaSequence lambda_k;
  Vector e_hat;
  double q_value = 0.0;        ///< Q(lambda^k) at this e_hat
  double q_prev = 0.0;         ///< Q(lambda^{k-1}) at this e_hat
  double delta_norm = 0.0;
  long draws = 0;
  bool m_step_converged = false;
  /// log p(y | lambda^k) - log p(y | lambda^{k-1}) by importance weights on the sample.
  double loglik_increment = 0.0;
  double loglik_increment_se = 0.0;
};

struct McemResult {
  LambdaSequence lambda;
  std::vector<McemState> trace;
  bool converged = false;
  bool stalled = false;  ///< ||dlambda|| stayed above eps for stall_window iterations
  double eps = 0.0;
};

McemResult run_mcem(const RegressionData& data, const NoisePrior& prior, const McemConfig& config);

}  // namespace bslope

#endif  // BSLOPE_LAMBDA_INFERENCE_HPP

#ifndef BSLOPE_MAP_SOLVER_HPP
#define BSLOPE_MAP_SOLVER_HPP

#include "bslope/model.hpp"

namespace bslope {

struct MapSolution {
  Vector beta_hat;
  double objective = 0.0;
  long iterations = 0;
  bool converged = false;
  double kkt_residual = 0.0;
};

/// Largest eigenvalue of X'X by power iteration.
double gram_spectral_norm(const RegressionData& data, int max_iter = 1000, double rel_tol = 1e-12);

/// Maximum violation of 0 in grad + sigma * dJ_lambda(beta), measured in units of
/// c = (X'y - X'X beta) / sigma. Clusters of equal |beta_i| are checked for
/// majorization by the matching lambda block; nonzero clusters must match its sum.
double slope_kkt_residual(const RegressionData& data, const Vector& beta,
                          const LambdaSequence& lambda, double sigma);

/// 1/2 ||y - X beta||^2 + sigma sum_i lambda_i |beta|_(i).
double slope_objective(const RegressionData& data, const Vector& beta, const LambdaSequence& lambda,
                       double sigma);

/// Accelerated proximal gradient with function-value restart. Converged when the
/// relative objective change is below tol and the KKT residual below 10 tol;
/// otherwise returns the best iterate with converged = false.
MapSolution fit_slope_map(const RegressionData& data, const LambdaSequence& lambda, double sigma,
                          double tol = 1e-10, long max_iter = 200000,
                          const Vector* warm_start = nullptr);

}  // namespace bslope

#endif  // BSLOPE_MAP_SOLVER_HPP

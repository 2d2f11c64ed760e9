#include "bslope/map_solver.hpp"

#include <cmath>

namespace bslope {

double gram_spectral_norm(const RegressionData& data, int max_iter, double rel_tol) {
  const Matrix& g = data.gram();
  Vector v = Vector::Ones(g.rows()).normalized();
  double est = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    Vector w = g * v;
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    v = w / norm;
    if (std::abs(norm - est) <= rel_tol * norm) return norm;
    est = norm;
  }
  return est;
}

double slope_objective(const RegressionData& data, const Vector& beta, const LambdaSequence& lambda,
                       double sigma) {
  return 0.5 * data.rss(beta) + sigma * sorted_l1_norm(beta, lambda.values());
}

double slope_kkt_residual(const RegressionData& data, const Vector& beta,
                          const LambdaSequence& lambda, double sigma) {
  const Vector c = (data.xty() - data.gram() * beta) / sigma;
  const auto order = magnitude_order(beta);
  const Eigen::Index p = beta.size();
  const double scale = beta.cwiseAbs().maxCoeff();
  const double tie_tol = 1e-14 * scale;
  double worst = 0.0;
  Eigen::Index r = 0;
  while (r < p) {
    const double level = std::abs(beta(order[static_cast<std::size_t>(r)]));
    Eigen::Index end = r + 1;
    const bool zero_cluster = level <= tie_tol;
    while (end < p) {
      const double next = std::abs(beta(order[static_cast<std::size_t>(end)]));
      if (zero_cluster ? next > tie_tol : std::abs(next - level) > tie_tol) break;
      ++end;
    }
    std::vector<double> z;
    for (Eigen::Index k = r; k < end; ++k) {
      const Eigen::Index i = order[static_cast<std::size_t>(k)];
      z.push_back(zero_cluster ? std::abs(c(i)) : (beta(i) > 0 ? c(i) : -c(i)));
    }
    std::sort(z.begin(), z.end(), std::greater<double>());
    double cz = 0.0;
    double cl = 0.0;
    for (Eigen::Index k = r; k < end; ++k) {
      cz += z[static_cast<std::size_t>(k - r)];
      cl += lambda[k];
      worst = std::max(worst, cz - cl);
    }
    if (!zero_cluster) worst = std::max(worst, std::abs(cz - cl));
    r = end;
  }
  return worst;
}

MapSolution fit_slope_map(const RegressionData& data, const LambdaSequence& lambda, double sigma,
                          double tol, long max_iter, const Vector* warm_start) {
  if (!(tol > 0.0)) throw DomainError("fit_slope_map: tol must be positive");
  if (!(sigma > 0.0)) throw DomainError("fit_slope_map: sigma must be positive");
  if (lambda.size() != data.p()) throw DimensionMismatch("fit_slope_map: lambda length != p");
  const Eigen::Index p = data.p();
  const double lip = gram_spectral_norm(data) * (1.0 + 1e-6);
  const Vector theta = lambda.values() * (sigma / lip);

  Vector x = warm_start ? *warm_start : Vector::Zero(p);
  if (x.size() != p) throw DimensionMismatch("fit_slope_map: warm start length != p");
  Vector y = x;
  double t = 1.0;
  double f = slope_objective(data, x, lambda, sigma);

  MapSolution best{x, f, 0, false, slope_kkt_residual(data, x, lambda, sigma)};
  for (long it = 1; it <= max_iter; ++it) {
    const Vector grad = data.gram() * y - data.xty();
    Vector x_new = prox_sorted_l1(y - grad / lip, theta);
    double f_new = slope_objective(data, x_new, lambda, sigma);
    if (f_new > f) {
      // Restart: drop momentum and take a plain proximal step from x.
      t = 1.0;
      const Vector g0 = data.gram() * x - data.xty();
      x_new = prox_sorted_l1(x - g0 / lip, theta);
      f_new = slope_objective(data, x_new, lambda, sigma);
      y = x_new;
    } else {
      const double t_new = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      y = x_new + ((t - 1.0) / t_new) * (x_new - x);
      t = t_new;
    }
    const double change = std::abs(f - f_new);
    x = std::move(x_new);
    f = f_new;
    if (f <= best.objective) {
      best.beta_hat = x;
      best.objective = f;
    }
    best.iterations = it;
    if (change <= tol * std::max(1.0, std::abs(f))) {
      const double kkt = slope_kkt_residual(data, x, lambda, sigma);
      if (kkt < 10.0 * tol) {
        best.beta_hat = x;
        best.objective = f;
        best.kkt_residual = kkt;
        best.converged = true;
        return best;
      }
    }
  }
  best.kkt_residual = slope_kkt_residual(data, best.beta_hat, lambda, sigma);
  return best;
}

}  // namespace bslope

#include "bslope/lambda_inference.hpp"

#include <algorithm>
#include <cmath>

namespace bslope {

namespace {

double q_raw(const Vector& lam, const Vector& e) {
  double acc = 0.0;
  double q = 0.0;
  for (Eigen::Index i = 0; i < lam.size(); ++i) {
    acc += lam(i);
    if (!(acc > 0.0)) return -kInf;
    q += std::log(acc) - lam(i) * e(i);
  }
  return q;
}

Vector grad_raw(const Vector& lam, const Vector& e) {
  const Eigen::Index p = lam.size();
  Vector s(p);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < p; ++i) s(i) = (acc += lam(i));
  Vector g(p);
  double tail = 0.0;
  for (Eigen::Index k = p - 1; k >= 0; --k) {
    tail += 1.0 / s(k);
    g(k) = tail - e(k);
  }
  return g;
}

void check_inputs(const Vector& lam, const Vector& e) {
  if (lam.size() != e.size()) throw DimensionMismatch("Q: lambda and e_hat lengths differ");
  if ((e.array() < 0.0).any()) throw DomainError("Q: e_hat must be nonnegative");
}

}  // namespace

double q_function(const LambdaSequence& lambda, const Vector& e_hat) {
  check_inputs(lambda.values(), e_hat);
  const double q = q_raw(lambda.values(), e_hat);
  if (!std::isfinite(q)) throw ImproperPrior("Q: leading partial sum of lambda is zero");
  return q;
}

Vector q_gradient(const LambdaSequence& lambda, const Vector& e_hat) {
  check_inputs(lambda.values(), e_hat);
  if (!lambda.proper()) throw ImproperPrior("Q: leading partial sum of lambda is zero");
  return grad_raw(lambda.values(), e_hat);
}

QMaximum maximize_q(const Vector& e_hat, const LambdaSequence& lambda_init, double tol,
                    long max_iter) {
  check_inputs(lambda_init.values(), e_hat);
  if (!(e_hat.sum() > 0.0)) throw DomainError("maximize_q: Q is unbounded when e_hat = 0");
  if (!lambda_init.proper()) throw ImproperPrior("maximize_q: initial lambda is improper");

  Vector lam = lambda_init.values();
  double q = q_raw(lam, e_hat);
  Vector g = grad_raw(lam, e_hat);
  double step = 1.0 / std::max(1.0, g.cwiseAbs().maxCoeff() / std::max(lam(0), 1e-12));
  Vector prev_lam, prev_g;
  QMaximum out;
  for (long it = 0; it < max_iter; ++it) {
    out.iterations = it;
    if ((project_monotone_cone(lam + g) - lam).norm() < tol) {
      out.converged = true;
      break;
    }
    // Barzilai-Borwein trial step, then Armijo backtracking along the projection arc.
    if (prev_lam.size()) {
      const Vector s = lam - prev_lam;
      const Vector yv = g - prev_g;
      const double sy = s.dot(yv);
      if (sy < 0.0) step = s.squaredNorm() / -sy;
    }
    bool moved = false;
    for (int bt = 0; bt < 60; ++bt) {
      const Vector trial = project_monotone_cone(lam + step * g);
      const double qt = q_raw(trial, e_hat);
      if (std::isfinite(qt) && qt >= q + 1e-4 * g.dot(trial - lam)) {
        prev_lam = lam;
        prev_g = g;
        lam = trial;
        q = qt;
        g = grad_raw(lam, e_hat);
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) {
      out.converged = (project_monotone_cone(lam + g) - lam).norm() < std::sqrt(tol);
      break;
    }
    out.iterations = it + 1;
  }
  out.lambda = LambdaSequence(lam);
  out.q = q;
  return out;
}

Vector expected_scaled_magnitudes(const PosteriorSample& sample) {
  const Eigen::Index rows = sample.draws.rows();
  if (rows == 0) throw TooFewDraws("expected_scaled_magnitudes: empty sample");
  Vector acc = Vector::Zero(sample.p);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Vector beta = sample.draws.row(r).head(sample.p).transpose();
    acc += sorted_magnitudes(beta) / std::sqrt(sample.draws(r, sample.p));
  }
  return acc / static_cast<double>(rows);
}

namespace {

struct Increment {
  double value = 0.0;
  double se = 0.0;
};

Increment log_likelihood_increment(const PosteriorSample& sample, const LambdaSequence& from,
                                   const LambdaSequence& to) {
  const Eigen::Index rows = sample.draws.rows();
  const Vector diff = to.values() - from.values();
  std::vector<double> logw(static_cast<std::size_t>(rows));
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Vector beta = sample.draws.row(r).head(sample.p).transpose();
    logw[static_cast<std::size_t>(r)] =
        -sorted_magnitudes(beta).dot(diff) / std::sqrt(sample.draws(r, sample.p));
  }
  const double lse = log_sum_exp(logw);
  const double n = static_cast<double>(rows);
  double m2 = 0.0;
  for (double lw : logw) m2 += std::exp(2.0 * (lw - lse));
  const Vector s_to = to.partial_sums();
  const Vector s_from = from.partial_sums();
  Increment out;
  out.value = (s_to.array().log() - s_from.array().log()).sum() + lse - std::log(n);
  // w_i / mean(w) has variance n * sum(w^2)/sum(w)^2 - 1.
  out.se = std::sqrt(std::max(0.0, n * m2 - 1.0) / n);
  return out;
}

}  // namespace

McemResult run_mcem(const RegressionData& data, const NoisePrior& prior, const McemConfig& config) {
  const Eigen::Index p = data.p();
  const LambdaSequence bh = bh_lambda(config.bh_q, p);
  const double eps = config.eps.value_or(1e-3 * bh.values().norm());
  if (!(eps > 0.0)) throw DomainError("run_mcem: eps must be positive");
  if (config.max_iterations < 1) throw DomainError("run_mcem: max_iterations must be >= 1");

  McemResult result;
  result.eps = eps;
  LambdaSequence lambda = config.lambda_init.value_or(bh);
  if (lambda.size() != p) throw DimensionMismatch("run_mcem: lambda length != p");

  SamplerConfig sc = config.sampler;
  double draws = static_cast<double>(config.initial_draws);
  for (int k = 1; k <= config.max_iterations; ++k) {
    const long want = std::min(config.max_draws, static_cast<long>(std::ceil(draws)));
    const long per_chain = (want + sc.chains - 1) / sc.chains;
    sc.warmup = k == 1 ? config.first_warmup : config.warm_warmup;
    sc.iters = sc.warmup + per_chain;
    const PosteriorSample sample = run_sampler(data, prior, lambda, sc);

    McemState st;
    st.iteration = k;
    st.lambda_prev = lambda;
    st.draws = static_cast<long>(sample.draws.rows());
    st.e_hat = expected_scaled_magnitudes(sample);
    st.q_prev = q_function(lambda, st.e_hat);
    const QMaximum m = maximize_q(st.e_hat, lambda);
    st.lambda_k = m.lambda;
    st.q_value = m.q;
    st.m_step_converged = m.converged;
    st.delta_norm = (m.lambda.values() - lambda.values()).norm();
    const Increment inc = log_likelihood_increment(sample, lambda, m.lambda);
    st.loglik_increment = inc.value;
    st.loglik_increment_se = inc.se;
    result.trace.push_back(st);

    // Later E-steps restart from the end of the first chain with its tuned step size.
    const ChainMeta& meta = sample.chain_meta.front();
    sc.beta_init = meta.final_beta;
    sc.sigma2_init = meta.final_sigma2;
    if (sc.kind == SamplerKind::kHmc && meta.step_size > 0.0) {
      sc.step_size_init = meta.step_size;
      sc.inverse_metric_init = meta.inverse_metric;
    }

    lambda = m.lambda;
    draws *= config.growth;
    if (st.delta_norm < eps) {
      result.converged = true;
      break;
    }
  }
  if (!result.converged && static_cast<int>(result.trace.size()) >= config.stall_window)
    result.stalled = true;
  result.lambda = lambda;
  return result;
}

}  // namespace bslope

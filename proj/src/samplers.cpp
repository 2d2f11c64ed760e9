#include "bslope/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <functional>
#include <thread>

#include "bslope/map_solver.hpp"

namespace bslope {

// ===========================================================================
// Coordinate conditionals

double ConditionalPieces::lower(int sign_row, Eigen::Index k) const {
  return sign_row == 0 ? breakpoints(k) : -breakpoints(k - 1);
}

double ConditionalPieces::upper(int sign_row, Eigen::Index k) const {
  return sign_row == 0 ? breakpoints(k - 1) : -breakpoints(k);
}

namespace {

// `others` holds the other p-1 magnitudes in decreasing order; `center` is
// x_j'(y - X_{-j} beta_{-j}) / ||x_j||^2.
void build_pieces(Eigen::Index j, double center, double norm2, double sigma, const Vector& lambda,
                  const std::vector<double>& others, ConditionalPieces& out) {
  const Eigen::Index p = lambda.size();
  out.j = j;
  out.precision = norm2 / (sigma * sigma);
  out.breakpoints.resize(p + 1);
  out.means.resize(2, p);
  out.log_weights.resize(2, p);
  out.breakpoints(0) = kInf;
  for (Eigen::Index i = 1; i < p; ++i) out.breakpoints(i) = others[static_cast<std::size_t>(i - 1)];
  out.breakpoints(p) = 0.0;

  // Penalty carried by the other coordinates when beta_j takes rank k:
  // K_k = sum_{i<k} lambda_i x_i + sum_{i>=k} lambda_{i+1} x_i.
  double penalty_others = 0.0;
  for (Eigen::Index i = 1; i < p; ++i) penalty_others += lambda(i) * out.breakpoints(i);

  const double omega = out.precision;
  const double root = std::sqrt(omega);
  for (Eigen::Index k = 1; k <= p; ++k) {
    if (k > 1) penalty_others += (lambda(k - 2) - lambda(k - 1)) * out.breakpoints(k - 1);
    const double shift = lambda(k - 1) * sigma / norm2;
    const double hi = out.breakpoints(k - 1);
    const double lo = out.breakpoints(k);
    for (int row = 0; row < 2; ++row) {
      const double mu = row == 0 ? center - shift : center + shift;
      out.means(row, k - 1) = mu;
      const double a = row == 0 ? lo : -hi;
      const double b = row == 0 ? hi : -lo;
      const double log_mass = log_normal_interval(root * (a - mu), root * (b - mu));
      out.log_weights(row, k - 1) = 0.5 * omega * mu * mu - penalty_others / sigma + log_mass;
    }
  }
  const double total = log_sum_exp(std::span<const double>(out.log_weights.data(), 2 * p));
  out.log_weights.array() -= total;
}

}  // namespace

ConditionalPieces conditional_beta_pieces(Eigen::Index j, const ChainState& state,
                                          const RegressionData& data, double sigma2) {
  const Eigen::Index p = data.p();
  if (j < 0 || j >= p) throw DomainError("conditional_beta_pieces: index out of range");
  const double norm2 = data.gram()(j, j);
  if (!(norm2 > 0.0)) throw ZeroColumn("column " + std::to_string(j) + " is zero");
  const double center = data.x().col(j).dot(state.residual) / norm2 + state.beta(j);
  std::vector<double> others;
  others.reserve(static_cast<std::size_t>(p - 1));
  for (Eigen::Index i = 0; i < p; ++i)
    if (i != j) others.push_back(std::abs(state.beta(i)));
  std::sort(others.begin(), others.end(), std::greater<double>());
  ConditionalPieces out;
  build_pieces(j, center, norm2, std::sqrt(sigma2), state.lambda.values(), others, out);
  return out;
}

PieceDraw draw_piecewise_normal(const ConditionalPieces& pieces, Rng& rng) {
  const Eigen::Index p = pieces.p();
  double u = uniform01(rng);
  int row = 0;
  Eigen::Index k = 1;
  bool chosen = false;
  for (int r = 0; r < 2 && !chosen; ++r) {
    for (Eigen::Index kk = 1; kk <= p; ++kk) {
      const double w = std::exp(pieces.log_weights(r, kk - 1));
      if (w <= 0.0) continue;
      row = r;
      k = kk;
      if (u < w) {
        chosen = true;
        break;
      }
      u -= w;
    }
  }
  const double mu = pieces.means(row, k - 1);
  const double sd = 1.0 / std::sqrt(pieces.precision);
  const double value = sample_truncated_normal(mu, sd, pieces.lower(row, k), pieces.upper(row, k), rng);
  return {value, row == 0 ? 1 : -1, k};
}

double sample_piecewise_normal(const ConditionalPieces& pieces, Rng& rng) {
  return draw_piecewise_normal(pieces, rng).value;
}

// ===========================================================================
// sigma2

Sigma2Conditional Sigma2Conditional::from_state(const Vector& beta, const LambdaSequence& lambda,
                                                const RegressionData& data,
                                                const NoisePrior& prior) {
  Sigma2Conditional c;
  c.a_star = 0.5 * static_cast<double>(data.n() + data.p()) + prior.a;
  c.gamma_star = 0.5 * data.rss(beta) + prior.gamma;
  c.alpha_star = sorted_l1_norm(beta, lambda.values());
  return c;
}

double Sigma2Conditional::log_density(double sigma2) const {
  if (!(sigma2 > 0.0)) return -kInf;
  return -(a_star + 1.0) * std::log(sigma2) - gamma_star / sigma2 - alpha_star / std::sqrt(sigma2);
}

bool Sigma2Conditional::proper() const {
  return a_star > 0.0 && (gamma_star > 0.0 || alpha_star > 0.0);
}

namespace {

// Density of t = log sigma2: -a* t - gamma* e^{-t} - alpha* e^{-t/2}; concave.
struct LogSigma2Target {
  const Sigma2Conditional& c;
  double operator()(double t) const {
    return -c.a_star * t - c.gamma_star * std::exp(-t) - c.alpha_star * std::exp(-0.5 * t);
  }
  double mode() const {
    // Solve gamma* u^2 + (alpha*/2) u - a* = 0 for u = e^{-t/2}.
    double u;
    if (c.gamma_star > 0.0) {
      const double h = 0.5 * c.alpha_star;
      u = (-h + std::sqrt(h * h + 4.0 * c.gamma_star * c.a_star)) / (2.0 * c.gamma_star);
    } else {
      u = 2.0 * c.a_star / c.alpha_star;
    }
    return -2.0 * std::log(u);
  }
  double width() const {
    const double t = mode();
    const double curv = c.gamma_star * std::exp(-t) + 0.25 * c.alpha_star * std::exp(-0.5 * t);
    return 2.5 / std::sqrt(std::max(curv, 1e-300));
  }
};

// Neal (2003) slice sampler with stepping out and shrinkage.
template <typename F>
double slice_update(const F& logf, double x0, double w, double lo, double hi, Rng& rng,
                    int max_steps = 64) {
  const double fx0 = logf(x0);
  const double level = fx0 + std::log(uniform01(rng));  // log(u f(x0))
  double left = x0 - w * uniform01(rng);
  double right = left + w;
  int j = static_cast<int>(std::floor(max_steps * uniform01(rng)));
  int k = max_steps - 1 - j;
  left = std::max(left, lo);
  right = std::min(right, hi);
  while (j-- > 0 && left > lo && logf(left) > level) left = std::max(left - w, lo);
  while (k-- > 0 && right < hi && logf(right) > level) right = std::min(right + w, hi);
  for (int guard = 0; guard < 200; ++guard) {
    const double x1 = left + (right - left) * uniform01(rng);
    if (logf(x1) > level) return x1;
    if (x1 < x0) left = x1;
    else right = x1;
  }
  return x0;
}

}  // namespace

double sample_sigma2(const Sigma2Conditional& cond, Rng& rng, double current, Sigma2Method method) {
  if (!cond.proper())
    throw DegenerateConditional("sigma2 conditional is improper (a* <= 0 or gamma* = alpha* = 0)");
  const bool can_reject = cond.gamma_star > 0.0;
  if (method == Sigma2Method::kAuto) {
    method = Sigma2Method::kSlice;
    if (can_reject) {
      const double mode = cond.gamma_star / (cond.a_star + 1.0);
      if (std::exp(-cond.alpha_star / std::sqrt(mode)) > 0.1) method = Sigma2Method::kRejection;
    }
  }
  if (method == Sigma2Method::kRejection) {
    if (!can_reject) throw DegenerateConditional("rejection sampler needs gamma* > 0");
    std::gamma_distribution<double> gamma(cond.a_star, 1.0);
    for (;;) {
      const double s2 = cond.gamma_star / gamma(rng);
      if (uniform01(rng) <= std::exp(-cond.alpha_star / std::sqrt(s2))) return s2;
    }
  }
  LogSigma2Target target{cond};
  double t = current > 0.0 ? std::log(current) : target.mode();
  const double w = target.width();
  for (int it = 0; it < 20; ++it) t = slice_update(target, t, w, -kInf, kInf, rng);
  return std::exp(t);
}

// ===========================================================================
// HMC

int HmcConfig::steps_for(double step) const {
  if (leapfrog_steps > 0) return leapfrog_steps;
  const double n = std::ceil(integration_time / step);
  return static_cast<int>(std::clamp(n, 1.0, static_cast<double>(max_leapfrog_steps)));
}

DualAveraging::DualAveraging(double initial_step, double target)
    : mu_(std::log(10.0 * initial_step)), target_(target), log_step_(std::log(initial_step)) {}

void DualAveraging::update(double accept_prob) {
  constexpr double kGamma = 0.05;
  constexpr double kT0 = 10.0;
  constexpr double kKappa = 0.75;
  ++t_;
  const double t = static_cast<double>(t_);
  const double eta = 1.0 / (t + kT0);
  h_bar_ = (1.0 - eta) * h_bar_ + eta * (target_ - accept_prob);
  log_step_ = mu_ - std::sqrt(t) / kGamma * h_bar_;
  const double w = std::pow(t, -kKappa);
  log_step_bar_ = w * log_step_ + (1.0 - w) * log_step_bar_;
}

HmcBetaKernel::HmcBetaKernel(const RegressionData& data, const HmcConfig& config)
    : data_(data), config_(config) {
  if (config.leapfrog_steps < 0) throw DomainError("HmcConfig: leapfrog_steps must be >= 0");
  if (config.leapfrog_steps == 0 && !(config.integration_time > 0.0))
    throw DomainError("HmcConfig: integration_time must be positive");
  if (!(config.step_size > 0.0)) throw DomainError("HmcConfig: step_size must be positive");
  const Eigen::Index p = data.p();
  if (config.gram_metric && data.n() >= p) {
    Eigen::LLT<Matrix> llt(data.gram());
    if (llt.info() == Eigen::Success) {
      const Vector d = Matrix(llt.matrixL()).diagonal();
      if (d.minCoeff() > 0.0 && d.maxCoeff() / d.minCoeff() < 1e5) {
        chol_ = llt.matrixL();
        metric_ = Metric::kGram;
      }
    }
  }
  if (metric_ == Metric::kDiagonal) {
    diag_ = data.gram().diagonal();
    for (Eigen::Index j = 0; j < p; ++j)
      if (!(diag_(j) > 0.0)) throw ZeroColumn("column " + std::to_string(j) + " is zero");
  }
}

void HmcBetaKernel::set_inverse_metric(const Matrix& cov) {
  if (cov.rows() != data_.p() || cov.cols() != data_.p())
    throw DimensionMismatch("set_inverse_metric: matrix must be p x p");
  Eigen::LLT<Matrix> llt(0.5 * (cov + cov.transpose()));
  if (llt.info() != Eigen::Success) throw DomainError("set_inverse_metric: matrix is not positive definite");
  chol_ = llt.matrixL();
  metric_ = Metric::kCovariance;
}

Matrix HmcBetaKernel::inverse_metric(double sigma2) const {
  switch (metric_) {
    case Metric::kCovariance: return chol_ * chol_.transpose();
    case Metric::kGram: return sigma2 * data_.gram().inverse();
    case Metric::kDiagonal: break;
  }
  return Matrix(sigma2 * diag_.cwiseInverse().asDiagonal());
}

double HmcBetaKernel::potential(const Vector& beta, double sigma2, const LambdaSequence& lambda) const {
  return data_.rss(beta) / (2.0 * sigma2) + sorted_l1_norm(beta, lambda.values()) / std::sqrt(sigma2);
}

Vector HmcBetaKernel::gradient(const Vector& beta, double sigma2, const LambdaSequence& lambda) const {
  return (data_.gram() * beta - data_.xty()) / sigma2 +
         sorted_l1_subgradient(beta, lambda.values()) / std::sqrt(sigma2);
}

HmcStats HmcBetaKernel::transition(Vector& beta, double sigma2, const LambdaSequence& lambda,
                                   double step_size, Rng& rng, int steps) const {
  const Eigen::Index p = beta.size();
  if (steps <= 0) steps = config_.steps_for(step_size);
  const double sigma = std::sqrt(sigma2);
  const auto lower = chol_.triangularView<Eigen::Lower>();
  auto velocity = [&](const Vector& v) -> Vector {
    switch (metric_) {
      case Metric::kGram: {
        Vector w = lower.solve(v);
        lower.transpose().solveInPlace(w);
        return sigma2 * w;
      }
      case Metric::kCovariance: return chol_ * (lower.transpose() * v);
      case Metric::kDiagonal: break;
    }
    return sigma2 * v.cwiseQuotient(diag_);
  };
  Vector xi(p);
  for (Eigen::Index i = 0; i < p; ++i) xi(i) = standard_normal(rng);
  Vector v;
  switch (metric_) {
    case Metric::kGram: v = chol_ * xi / sigma; break;
    case Metric::kCovariance: v = lower.transpose().solve(xi); break;
    case Metric::kDiagonal: v = diag_.cwiseSqrt().cwiseProduct(xi) / sigma; break;
  }

  Vector x = beta;
  const double h0 = potential(x, sigma2, lambda) + 0.5 * v.dot(velocity(v));
  v -= 0.5 * step_size * gradient(x, sigma2, lambda);
  for (int l = 0; l < steps; ++l) {
    x += step_size * velocity(v);
    if (l + 1 < steps) v -= step_size * gradient(x, sigma2, lambda);
  }
  v -= 0.5 * step_size * gradient(x, sigma2, lambda);
  const double h1 = potential(x, sigma2, lambda) + 0.5 * v.dot(velocity(v));

  HmcStats stats;
  stats.delta_h = h1 - h0;
  if (!std::isfinite(stats.delta_h) || std::abs(stats.delta_h) > 1000.0) {
    stats.divergent = true;
    stats.accept_prob = 0.0;
    return stats;
  }
  stats.accept_prob = std::min(1.0, std::exp(-stats.delta_h));
  if (uniform01(rng) < stats.accept_prob) {
    beta = std::move(x);
    stats.accepted = true;
  }
  return stats;
}

Vector hmc_beta_block(const ChainState& state, const RegressionData& data, double sigma2,
                      const HmcConfig& config, Rng& rng, HmcStats* stats) {
  HmcBetaKernel kernel(data, config);
  Vector beta = state.beta;
  const HmcStats s = kernel.transition(beta, sigma2, state.lambda, config.step_size, rng);
  if (stats) *stats = s;
  return beta;
}

// ===========================================================================
// lambda conditional

namespace {

// Everything the lambda_j conditional needs: base_i = S_i - lambda_j for i >= j.
struct LambdaSlot {
  double lo = 0.0;
  double hi = 0.0;
  double rate = 0.0;
  std::vector<double> base;   // i = j..p-1
  std::vector<double> power;  // c_i + 1

  double log_product(double x) const {
    double s = 0.0;
    for (std::size_t k = 0; k < base.size(); ++k) s += power[k] * std::log(base[k] + x);
    return s;
  }
  double log_density(double x) const { return -rate * x + log_product(x); }
};

LambdaSlot make_slot(Eigen::Index j, const Vector& lam, const Vector& scaled_mags,
                     const LambdaHyperPrior& hyper, double cap) {
  const Eigen::Index p = lam.size();
  LambdaSlot slot;
  slot.lo = j + 1 < p ? lam(j + 1) : 0.0;
  slot.hi = j > 0 ? lam(j - 1) : cap;
  if (slot.lo > slot.hi) throw BracketEmpty("lambda bracket is empty");
  slot.rate = hyper.b(j) + scaled_mags(j);
  double prefix = 0.0;
  for (Eigen::Index i = 0; i < j; ++i) prefix += lam(i);
  double tail = 0.0;
  slot.base.reserve(static_cast<std::size_t>(p - j));
  slot.power.reserve(static_cast<std::size_t>(p - j));
  for (Eigen::Index i = j; i < p; ++i) {
    if (i > j) tail += lam(i);
    slot.base.push_back(prefix + tail);
    slot.power.push_back(hyper.c(i) + 1.0);
  }
  return slot;
}

double draw_lambda_slot(const LambdaSlot& slot, double current, Rng& rng, long max_attempts,
                        LambdaDrawStats* stats) {
  if (slot.lo == slot.hi) return slot.lo;
  const double envelope = slot.log_product(slot.hi);
  for (long a = 0; a < max_attempts; ++a) {
    if (stats) ++stats->attempts;
    const double x = trunc_exp_inverse_cdf(uniform01(rng), slot.rate, slot.lo, slot.hi);
    if (std::log(uniform01(rng)) <= slot.log_product(x) - envelope) return x;
  }
  if (stats) ++stats->fallbacks;
  const double start = std::clamp(current, slot.lo, slot.hi);
  double x = start;
  const auto logf = [&](double v) { return slot.log_density(v); };
  for (int it = 0; it < 5; ++it) x = slice_update(logf, x, slot.hi - slot.lo, slot.lo, slot.hi, rng);
  return x;
}

Vector scaled_magnitudes(const Vector& beta, double sigma2) {
  return sorted_magnitudes(beta) / std::sqrt(sigma2);
}

}  // namespace

double lambda_conditional_log_density(Eigen::Index j, double x, const ChainState& state,
                                      const LambdaHyperPrior& hyper) {
  const LambdaSlot slot = make_slot(j, state.lambda.values(), scaled_magnitudes(state.beta, state.sigma2),
                                    hyper, kInf);
  return slot.log_density(x);
}

double lambda_acceptance_ratio(Eigen::Index j, double x, const ChainState& state,
                               const LambdaHyperPrior& hyper, double cap) {
  const LambdaSlot slot =
      make_slot(j, state.lambda.values(), scaled_magnitudes(state.beta, state.sigma2), hyper, cap);
  return std::exp(slot.log_product(x) - slot.log_product(slot.hi));
}

double sample_lambda_conditional(Eigen::Index j, const ChainState& state,
                                 const LambdaHyperPrior& hyper, double cap, Rng& rng,
                                 long max_attempts, LambdaDrawStats* stats) {
  const Eigen::Index p = state.lambda.size();
  if (j < 0 || j >= p) throw DomainError("sample_lambda_conditional: index out of range");
  if (hyper.b.size() != p) throw DimensionMismatch("sample_lambda_conditional: hyperprior length");
  const LambdaSlot slot =
      make_slot(j, state.lambda.values(), scaled_magnitudes(state.beta, state.sigma2), hyper, cap);
  return draw_lambda_slot(slot, state.lambda[j], rng, max_attempts, stats);
}

// ===========================================================================
// Gibbs sweep

namespace {

struct GibbsWorkspace {
  Vector xtr;                 // X'(y - X beta)
  std::vector<double> mags;   // all |beta_i|, decreasing
  std::vector<double> others;
  ConditionalPieces pieces;
};

void erase_magnitude(std::vector<double>& mags, double value) {
  auto it = std::lower_bound(mags.begin(), mags.end(), value, std::greater<double>());
  mags.erase(it);
}

void insert_magnitude(std::vector<double>& mags, double value) {
  auto it = std::lower_bound(mags.begin(), mags.end(), value, std::greater<double>());
  mags.insert(it, value);
}

void sweep_in_place(ChainState& state, const RegressionData& data, const NoisePrior& prior,
                    Rng& rng, const GibbsOptions& options, GibbsWorkspace& ws) {
  const Eigen::Index p = data.p();
  const Matrix& g = data.gram();
  const double sigma = std::sqrt(state.sigma2);
  ws.xtr = data.xty() - g * state.beta;
  ws.mags.resize(static_cast<std::size_t>(p));
  for (Eigen::Index i = 0; i < p; ++i) ws.mags[static_cast<std::size_t>(i)] = std::abs(state.beta(i));
  std::sort(ws.mags.begin(), ws.mags.end(), std::greater<double>());

  for (Eigen::Index j = 0; j < p; ++j) {
    const double norm2 = g(j, j);
    if (!(norm2 > 0.0)) throw ZeroColumn("column " + std::to_string(j) + " is zero");
    const double old = state.beta(j);
    erase_magnitude(ws.mags, std::abs(old));
    const double center = ws.xtr(j) / norm2 + old;
    build_pieces(j, center, norm2, sigma, state.lambda.values(), ws.mags, ws.pieces);
    const double fresh = sample_piecewise_normal(ws.pieces, rng);
    insert_magnitude(ws.mags, std::abs(fresh));
    const double delta = fresh - old;
    if (delta != 0.0) ws.xtr -= g.col(j) * delta;
    state.beta(j) = fresh;
  }
  if (options.update_sigma2) {
    const auto cond = Sigma2Conditional::from_state(state.beta, state.lambda, data, prior);
    state.sigma2 = sample_sigma2(cond, rng, state.sigma2, options.sigma2_method);
  }
  state.refresh_residual(data);
}

}  // namespace

ChainState gibbs_sweep(ChainState state, const RegressionData& data, const NoisePrior& prior,
                       Rng& rng, const GibbsOptions& options) {
  GibbsWorkspace ws;
  sweep_in_place(state, data, prior, rng, options, ws);
  return state;
}

// ===========================================================================
// Chains

std::vector<std::string> PosteriorSample::column_names() const {
  std::vector<std::string> names;
  for (Eigen::Index i = 0; i < p; ++i) names.push_back("beta" + std::to_string(i + 1));
  names.push_back("sigma2");
  if (has_lambda)
    for (Eigen::Index i = 0; i < p; ++i) names.push_back("lambda" + std::to_string(i + 1));
  return names;
}

Vector PosteriorSample::beta_mean() const {
  return draws.leftCols(p).colwise().mean().transpose();
}

ChainState initial_state(const RegressionData& data, const LambdaSequence& lambda,
                         const SamplerConfig& config) {
  const double sigma2 = config.sigma2_init ? *config.sigma2_init : data.sigma2_estimate();
  Vector beta;
  if (config.beta_init) {
    beta = *config.beta_init;
  } else {
    beta = fit_slope_map(data, lambda, std::sqrt(sigma2), 1e-8, 20000).beta_hat;
  }
  return ChainState(std::move(beta), sigma2, lambda, data);
}

namespace {

void validate(const SamplerConfig& config, const RegressionData& data, const LambdaSequence& lambda) {
  if (config.iters <= config.warmup_iters()) throw DomainError("sampler: iters must exceed warmup");
  if (config.chains < 1) throw DomainError("sampler: chains must be >= 1");
  if (lambda.size() != data.p()) throw DimensionMismatch("sampler: lambda length != p");
}

// Runs body(chain) for every chain, in threads when requested; rethrows the first error.
void for_each_chain(int chains, bool parallel, const std::function<void(int)>& body) {
  if (!parallel || chains == 1) {
    for (int c = 0; c < chains; ++c) body(c);
    return;
  }
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(chains));
  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(chains));
  for (int c = 0; c < chains; ++c) {
    threads.emplace_back([&, c] {
      try {
        body(c);
      } catch (...) {
        errors[static_cast<std::size_t>(c)] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

PosteriorSample make_sample(const SamplerConfig& config, Eigen::Index p, bool has_lambda,
                            std::string name) {
  PosteriorSample out;
  out.p = p;
  out.has_lambda = has_lambda;
  out.chains = config.chains;
  out.iters = config.iters;
  out.warmup = config.warmup_iters();
  out.seed = config.seed;
  out.sampler = std::move(name);
  out.chain_meta.resize(static_cast<std::size_t>(config.chains));
  const Eigen::Index cols = p + 1 + (has_lambda ? p : 0);
  out.draws.resize(config.chains * out.draws_per_chain(), cols);
  return out;
}

void store_row(PosteriorSample& out, int chain, long index, const Vector& beta, double sigma2,
               const Vector* lambda) {
  const Eigen::Index row = chain * out.draws_per_chain() + index;
  out.draws.row(row).head(out.p) = beta.transpose();
  out.draws(row, out.p) = sigma2;
  if (lambda) out.draws.row(row).segment(out.p + 1, out.p) = lambda->transpose();
}

double jittered(double step, double jitter, Rng& rng) {
  return step * (1.0 + jitter * (2.0 * uniform01(rng) - 1.0));
}

// Potential and gradient of the lambda block on u = log of the increments
// d_k = lambda_k - lambda_{k+1} (lambda_{p+1} = 0), including the log Jacobian.
struct LambdaHmcTarget {
  const LambdaHyperPrior& hyper;
  Vector rate;  // b_i + |beta|_(i) / sigma

  static Vector to_lambda(const Vector& u) {
    const Eigen::Index p = u.size();
    Vector lam(p);
    double acc = 0.0;
    for (Eigen::Index i = p - 1; i >= 0; --i) lam(i) = (acc += std::exp(u(i)));
    return lam;
  }
  static Vector from_lambda(const Vector& lam) {
    const Eigen::Index p = lam.size();
    Vector u(p);
    const double floor = 1e-12 * std::max(lam(0), 1e-300);
    for (Eigen::Index i = 0; i < p; ++i) {
      const double next = i + 1 < p ? lam(i + 1) : 0.0;
      u(i) = std::log(std::max(lam(i) - next, floor));
    }
    return u;
  }
  double potential(const Vector& u) const {
    const Vector lam = to_lambda(u);
    double acc = 0.0;
    double logp = -rate.dot(lam) + u.sum();
    for (Eigen::Index i = 0; i < lam.size(); ++i) {
      acc += lam(i);
      logp += (hyper.c(i) + 1.0) * std::log(acc);
    }
    return -logp;
  }
  Vector gradient(const Vector& u) const {
    const Eigen::Index p = u.size();
    const Vector lam = to_lambda(u);
    Vector partial(p);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < p; ++i) partial(i) = (acc += lam(i));
    // g_i = d log pi / d lambda_i
    Vector g(p);
    double tail = 0.0;
    for (Eigen::Index i = p - 1; i >= 0; --i) {
      tail += (hyper.c(i) + 1.0) / partial(i);
      g(i) = -rate(i) + tail;
    }
    Vector grad(p);
    double head = 0.0;
    for (Eigen::Index k = 0; k < p; ++k) {
      head += g(k);
      grad(k) = -(std::exp(u(k)) * head + 1.0);
    }
    return grad;
  }
};

HmcStats lambda_hmc_transition(Vector& lam, const LambdaHmcTarget& target, int steps, double eps,
                               Rng& rng) {
  const Eigen::Index p = lam.size();
  Vector u = LambdaHmcTarget::from_lambda(lam);
  Vector v(p);
  for (Eigen::Index i = 0; i < p; ++i) v(i) = standard_normal(rng);
  const double h0 = target.potential(u) + 0.5 * v.squaredNorm();
  Vector x = u;
  v -= 0.5 * eps * target.gradient(x);
  for (int l = 0; l < steps; ++l) {
    x += eps * v;
    if (l + 1 < steps) v -= eps * target.gradient(x);
  }
  v -= 0.5 * eps * target.gradient(x);
  HmcStats stats;
  stats.delta_h = target.potential(x) + 0.5 * v.squaredNorm() - h0;
  if (!std::isfinite(stats.delta_h) || std::abs(stats.delta_h) > 1000.0) {
    stats.divergent = true;
    return stats;
  }
  stats.accept_prob = std::min(1.0, std::exp(-stats.delta_h));
  if (uniform01(rng) < stats.accept_prob) {
    lam = LambdaHmcTarget::to_lambda(x);
    stats.accepted = true;
  }
  return stats;
}

struct BetaStepper {
  HmcBetaKernel kernel;
  const SamplerConfig& config;
  DualAveraging adapt;
  double step;
  long window_begin = 0;
  long window_end = 0;
  std::vector<Vector> window;
  long accepted = 0;
  long divergent = 0;
  double abs_dh = 0.0;
  double sum_dh = 0.0;
  long kept = 0;

  BetaStepper(const HmcBetaKernel& k, const SamplerConfig& c)
      : kernel(k),
        config(c),
        adapt(c.step_size_init.value_or(c.hmc.step_size), c.hmc.target_accept),
        step(c.step_size_init.value_or(c.hmc.step_size)) {
    if (c.inverse_metric_init) kernel.set_inverse_metric(*c.inverse_metric_init);
    const long warmup = c.warmup_iters();
    const long p = static_cast<long>(kernel.dim());
    if (c.hmc.adapt && c.hmc.adapt_metric) {
      window_begin = warmup * 15 / 100;
      window_end = warmup * 60 / 100;
      if (window_end - window_begin < std::max(100L, 3 * p)) window_end = window_begin;
    }
  }

  void update_metric() {
    const auto m = static_cast<Eigen::Index>(window.size());
    const Eigen::Index p = window.front().size();
    Vector mean = Vector::Zero(p);
    for (const auto& b : window) mean += b;
    mean /= static_cast<double>(m);
    Matrix cov = Matrix::Zero(p, p);
    for (const auto& b : window) cov.noalias() += (b - mean) * (b - mean).transpose();
    cov /= static_cast<double>(m - 1);
    const double w = static_cast<double>(m) / (static_cast<double>(m) + 5.0);
    Matrix shrunk = w * cov;
    shrunk.diagonal() += (1.0 - w) * 1e-3 * cov.diagonal() + Vector::Constant(p, 1e-300);
    window.clear();
    try {
      kernel.set_inverse_metric(shrunk);
    } catch (const DomainError&) {
      return;
    }
    adapt = DualAveraging(step, config.hmc.target_accept);
  }

  void operator()(Vector& beta, double sigma2, const LambdaSequence& lambda, long it, Rng& rng) {
    const long warmup = config.warmup_iters();
    const HmcStats s = kernel.transition(beta, sigma2, lambda, jittered(step, config.hmc.jitter, rng), rng,
                                         config.hmc.steps_for(step));
    if (it < warmup && config.hmc.adapt) {
      adapt.update(s.accept_prob);
      step = it + 1 == warmup ? adapt.final_step() : adapt.current();
      if (it >= window_begin && it < window_end) window.push_back(beta);
      if (it + 1 == window_end && !window.empty()) update_metric();
    }
    if (it >= warmup) {
      ++kept;
      accepted += s.accepted ? 1 : 0;
      divergent += s.divergent ? 1 : 0;
      abs_dh += s.divergent ? 0.0 : std::abs(s.delta_h);
      sum_dh += s.divergent ? 0.0 : s.delta_h;
    }
  }
  void fill(ChainMeta& meta, double sigma2) const {
    meta.accept_rate = kept ? static_cast<double>(accepted) / static_cast<double>(kept) : 0.0;
    meta.step_size = step;
    meta.divergences = divergent;
    const double finite = static_cast<double>(kept - divergent > 0 ? kept - divergent : 1);
    meta.mean_abs_delta_h = kept ? abs_dh / finite : 0.0;
    meta.mean_delta_h = kept ? sum_dh / finite : 0.0;
    meta.inverse_metric = kernel.inverse_metric(sigma2);
  }
};

}  // namespace

PosteriorSample run_gibbs(const RegressionData& data, const NoisePrior& prior,
                          const LambdaSequence& lambda, const SamplerConfig& config) {
  validate(config, data, lambda);
  PosteriorSample out = make_sample(config, data.p(), false, "gibbs");
  const ChainState start = initial_state(data, lambda, config);
  const GibbsOptions options{config.sigma2_method, config.update_sigma2};
  const long warmup = config.warmup_iters();
  for_each_chain(config.chains, config.parallel, [&](int chain) {
    Rng rng = make_stream(config.seed, static_cast<std::uint64_t>(chain) + 1);
    ChainState state = start;
    GibbsWorkspace ws;
    for (long it = 0; it < config.iters; ++it) {
      sweep_in_place(state, data, prior, rng, options, ws);
      if (it >= warmup) store_row(out, chain, it - warmup, state.beta, state.sigma2, nullptr);
    }
    auto& meta = out.chain_meta[static_cast<std::size_t>(chain)];
    meta.accept_rate = 1.0;
    meta.final_beta = state.beta;
    meta.final_sigma2 = state.sigma2;
  });
  return out;
}

PosteriorSample run_block_gibbs(const RegressionData& data, const NoisePrior& prior,
                                const LambdaSequence& lambda, const SamplerConfig& config) {
  validate(config, data, lambda);
  PosteriorSample out = make_sample(config, data.p(), false, "hmc");
  const ChainState start = initial_state(data, lambda, config);
  const HmcBetaKernel kernel(data, config.hmc);
  const long warmup = config.warmup_iters();
  for_each_chain(config.chains, config.parallel, [&](int chain) {
    Rng rng = make_stream(config.seed, static_cast<std::uint64_t>(chain) + 1);
    Vector beta = start.beta;
    double sigma2 = start.sigma2;
    BetaStepper stepper(kernel, config);
    for (long it = 0; it < config.iters; ++it) {
      stepper(beta, sigma2, lambda, it, rng);
      if (config.update_sigma2) {
        const auto cond = Sigma2Conditional::from_state(beta, lambda, data, prior);
        sigma2 = sample_sigma2(cond, rng, sigma2, config.sigma2_method);
      }
      if (it >= warmup) store_row(out, chain, it - warmup, beta, sigma2, nullptr);
    }
    auto& meta = out.chain_meta[static_cast<std::size_t>(chain)];
    stepper.fill(meta, sigma2);
    meta.final_beta = beta;
    meta.final_sigma2 = sigma2;
  });
  return out;
}

PosteriorSample run_sampler(const RegressionData& data, const NoisePrior& prior,
                            const LambdaSequence& lambda, const SamplerConfig& config) {
  return config.kind == SamplerKind::kGibbs ? run_gibbs(data, prior, lambda, config)
                                            : run_block_gibbs(data, prior, lambda, config);
}

PosteriorSample run_extended_gibbs(const RegressionData& data, const NoisePrior& prior,
                                   const LambdaHyperPrior& hyper, const SamplerConfig& config) {
  const Eigen::Index p = data.p();
  const LambdaSequence bh = bh_lambda(0.2, p);
  const LambdaSequence lambda0 = config.lambda_init.value_or(bh);
  validate(config, data, lambda0);
  if (hyper.b.size() != p) throw DimensionMismatch("run_extended_gibbs: hyperprior length != p");
  PosteriorSample out = make_sample(config, p, true, "extended");
  const ChainState start = initial_state(data, lambda0, config);
  const HmcBetaKernel kernel(data, config.hmc);
  const long warmup = config.warmup_iters();
  const double cap = 10.0 * std::max({bh[0], lambda0[0], 1e-12});

  for_each_chain(config.chains, config.parallel, [&](int chain) {
    Rng rng = make_stream(config.seed, static_cast<std::uint64_t>(chain) + 1);
    ChainState state = start;
    Vector lam = state.lambda.values();
    BetaStepper stepper(kernel, config);
    DualAveraging lambda_adapt(config.hmc.lambda_step_size, config.hmc.target_accept);
    double lambda_step = config.hmc.lambda_step_size;
    LambdaDrawStats lstats;
    for (long it = 0; it < config.iters; ++it) {
      stepper(state.beta, state.sigma2, state.lambda, it, rng);
      if (config.update_sigma2) {
        const auto cond = Sigma2Conditional::from_state(state.beta, state.lambda, data, prior);
        state.sigma2 = sample_sigma2(cond, rng, state.sigma2, config.sigma2_method);
      }
      const Vector mags = scaled_magnitudes(state.beta, state.sigma2);
      if (config.lambda_update == LambdaUpdate::kCoordinate) {
        for (Eigen::Index j = 0; j < p; ++j) {
          const LambdaSlot slot = make_slot(j, lam, mags, hyper, cap);
          lam(j) = draw_lambda_slot(slot, lam(j), rng, config.lambda_max_attempts, &lstats);
        }
      } else {
        LambdaHmcTarget target{hyper, hyper.b + mags};
        const HmcStats s = lambda_hmc_transition(lam, target, config.hmc.lambda_leapfrog_steps,
                                                 jittered(lambda_step, config.hmc.jitter, rng), rng);
        if (it < warmup && config.hmc.adapt) {
          lambda_adapt.update(s.accept_prob);
          lambda_step = it + 1 == warmup ? lambda_adapt.final_step() : lambda_adapt.current();
        }
      }
      state.lambda = LambdaSequence(lam);
      if (it >= warmup) store_row(out, chain, it - warmup, state.beta, state.sigma2, &lam);
    }
    auto& meta = out.chain_meta[static_cast<std::size_t>(chain)];
    stepper.fill(meta, state.sigma2);
    meta.lambda_fallbacks = lstats.fallbacks;
    meta.lambda_cap = cap;
    meta.final_beta = state.beta;
    meta.final_sigma2 = state.sigma2;
    meta.final_lambda = lam;
  });
  return out;
}

}  // namespace bslope

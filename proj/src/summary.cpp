#include "bslope/summary.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace bslope {

const SummaryRow& SummaryTable::row(const std::string& name) const {
  for (const auto& r : rows)
    if (r.name == name) return r;
  throw DomainError("summary has no row named " + name);
}

double quantile_sorted(const std::vector<double>& sorted, double prob) {
  if (sorted.empty()) throw TooFewDraws("quantile of an empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

namespace {

SummaryRow summarize_column(std::string name, std::vector<double> v, double level, bool hpd) {
  SummaryRow r;
  r.name = std::move(name);
  const double n = static_cast<double>(v.size());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  r.mean = mean;
  r.sd = std::sqrt(ss / (n - 1.0));
  std::sort(v.begin(), v.end());
  r.median = quantile_sorted(v, 0.5);
  if (!hpd) {
    r.lower = quantile_sorted(v, 0.5 * (1.0 - level));
    r.upper = quantile_sorted(v, 0.5 * (1.0 + level));
  } else {
    const auto m = static_cast<std::size_t>(std::ceil(level * n));
    const std::size_t span = std::clamp<std::size_t>(m, 1, v.size()) - 1;
    std::size_t best = 0;
    for (std::size_t i = 0; i + span < v.size(); ++i)
      if (v[i + span] - v[i] < v[best + span] - v[best]) best = i;
    r.lower = v[best];
    r.upper = v[best + span];
  }
  return r;
}

std::vector<double> column(const Matrix& m, Eigen::Index j) {
  return std::vector<double>(m.col(j).data(), m.col(j).data() + m.rows());
}

}  // namespace

SummaryTable summarize(const PosteriorSample& sample, double level, bool hpd) {
  if (!(level > 0.0 && level < 1.0)) throw DomainError("summarize: level must be in (0, 1)");
  if (sample.draws.rows() < 100) throw TooFewDraws("summarize needs at least 100 draws");
  SummaryTable t;
  t.level = level;
  t.hpd = hpd;
  const auto names = sample.column_names();
  const Eigen::Index p = sample.p;
  for (Eigen::Index j = 0; j <= p; ++j)
    t.rows.push_back(summarize_column(names[static_cast<std::size_t>(j)], column(sample.draws, j), level, hpd));
  std::vector<double> sigma = column(sample.draws, p);
  for (double& s : sigma) s = std::sqrt(s);
  t.rows.push_back(summarize_column("sigma", std::move(sigma), level, hpd));
  if (sample.has_lambda)
    for (Eigen::Index j = p + 1; j < sample.draws.cols(); ++j)
      t.rows.push_back(summarize_column(names[static_cast<std::size_t>(j)], column(sample.draws, j), level, hpd));

  const Matrix b = sample.draws.leftCols(p);
  const Matrix centered = b.rowwise() - b.colwise().mean();
  const Matrix cov = centered.transpose() * centered / static_cast<double>(b.rows() - 1);
  const Vector sd = cov.diagonal().cwiseSqrt();
  t.beta_correlation = Matrix::Identity(p, p);
  for (Eigen::Index i = 0; i < p; ++i)
    for (Eigen::Index j = 0; j < i; ++j) {
      const double denom = sd(i) * sd(j);
      const double c = denom > 0.0 ? std::clamp(cov(i, j) / denom, -1.0, 1.0) : 0.0;
      t.beta_correlation(i, j) = c;
      t.beta_correlation(j, i) = c;
    }
  return t;
}

Prediction predict(const PosteriorSample& sample, const Matrix& x0, std::optional<double> level,
                   std::uint64_t seed) {
  if (x0.cols() != sample.p) throw DimensionMismatch("predict: X0 must have p columns");
  Prediction out;
  out.mean = x0 * sample.beta_mean();
  if (!level) return out;
  if (!(*level > 0.0 && *level < 1.0)) throw DomainError("predict: level must be in (0, 1)");
  const Eigen::Index rows = sample.draws.rows();
  Rng rng = make_stream(seed, 0);
  const Matrix fitted = x0 * sample.draws.leftCols(sample.p).transpose();  // m x draws
  out.lower.resize(x0.rows());
  out.upper.resize(x0.rows());
  std::vector<double> sims(static_cast<std::size_t>(rows));
  Matrix noise(x0.rows(), rows);
  for (Eigen::Index d = 0; d < rows; ++d) {
    const double sigma = std::sqrt(sample.draws(d, sample.p));
    for (Eigen::Index i = 0; i < x0.rows(); ++i) noise(i, d) = sigma * standard_normal(rng);
  }
  for (Eigen::Index i = 0; i < x0.rows(); ++i) {
    for (Eigen::Index d = 0; d < rows; ++d) sims[static_cast<std::size_t>(d)] = fitted(i, d) + noise(i, d);
    std::sort(sims.begin(), sims.end());
    out.lower(i) = quantile_sorted(sims, 0.5 * (1.0 - *level));
    out.upper(i) = quantile_sorted(sims, 0.5 * (1.0 + *level));
  }
  return out;
}

Vector autocorrelation(const Eigen::Ref<const Vector>& x, int max_lag) {
  const Eigen::Index n = x.size();
  const int lags = static_cast<int>(std::min<Eigen::Index>(max_lag, n - 1));
  Vector acf = Vector::Zero(max_lag + 1);
  const Vector c = x.array() - x.mean();
  const double c0 = c.squaredNorm() / static_cast<double>(n);
  if (!(c0 > 0.0)) {
    acf(0) = 1.0;
    for (int k = 1; k <= max_lag; ++k) acf(k) = std::numeric_limits<double>::quiet_NaN();
    return acf;
  }
  for (int k = 0; k <= lags; ++k)
    acf(k) = c.head(n - k).dot(c.tail(n - k)) / static_cast<double>(n) / c0;
  for (int k = lags + 1; k <= max_lag; ++k) acf(k) = std::numeric_limits<double>::quiet_NaN();
  return acf;
}

namespace {

double mean_of(const Vector& v) { return v.mean(); }
double var_of(const Vector& v) {
  return (v.array() - v.mean()).square().sum() / static_cast<double>(v.size() - 1);
}

}  // namespace

double effective_sample_size(const std::vector<Vector>& chains) {
  const std::size_t m = chains.size();
  if (m == 0) return 0.0;
  const Eigen::Index n = chains.front().size();
  if (n < 4) return std::numeric_limits<double>::quiet_NaN();
  double w = 0.0;
  Vector means(static_cast<Eigen::Index>(m));
  for (std::size_t c = 0; c < m; ++c) {
    w += var_of(chains[c]);
    means(static_cast<Eigen::Index>(c)) = mean_of(chains[c]);
  }
  w /= static_cast<double>(m);
  const double b_over_n = m > 1 ? var_of(means) : 0.0;
  const double var_plus = (static_cast<double>(n) - 1.0) / static_cast<double>(n) * w + b_over_n;
  const double total = static_cast<double>(m) * static_cast<double>(n);
  if (!(var_plus > 0.0)) return total;

  std::vector<Vector> centered;
  for (const auto& ch : chains) centered.emplace_back(ch.array() - ch.mean());
  const int max_lag = static_cast<int>(n - 1);
  auto rho = [&](int k) {
    double acov = 0.0;
    for (const auto& c : centered) acov += c.head(n - k).dot(c.tail(n - k)) / static_cast<double>(n);
    acov /= static_cast<double>(m);
    return 1.0 - (w - acov) / var_plus;
  };

  double tau = -1.0;
  double prev_pair = kInf;
  for (int k = 0; k + 1 <= max_lag; k += 2) {
    double pair = rho(k) + rho(k + 1);
    if (pair < 0.0) break;
    pair = std::min(pair, prev_pair);
    tau += 2.0 * pair;
    prev_pair = pair;
  }
  tau = std::max(tau, 1.0 / std::log10(total));
  return total / tau;
}

double split_rhat(const std::vector<Vector>& chains) {
  std::vector<Vector> halves;
  for (const auto& ch : chains) {
    const Eigen::Index h = ch.size() / 2;
    if (h < 2) return std::numeric_limits<double>::quiet_NaN();
    halves.push_back(ch.head(h));
    halves.push_back(ch.segment(ch.size() - h, h));
  }
  const auto m = static_cast<Eigen::Index>(halves.size());
  const double n = static_cast<double>(halves.front().size());
  Vector means(m);
  double w = 0.0;
  for (Eigen::Index c = 0; c < m; ++c) {
    means(c) = mean_of(halves[static_cast<std::size_t>(c)]);
    w += var_of(halves[static_cast<std::size_t>(c)]);
  }
  w /= static_cast<double>(m);
  const double b = n * var_of(means);
  if (!(w > 0.0)) return b > 0.0 ? kInf : 1.0;
  return std::sqrt(((n - 1.0) / n * w + b / n) / w);
}

DiagnosticsReport diagnostics(const PosteriorSample& sample, int max_lag) {
  DiagnosticsReport rep;
  rep.max_lag = max_lag;
  const auto names = sample.column_names();
  const long per = sample.draws_per_chain();
  for (Eigen::Index j = 0; j < sample.draws.cols(); ++j) {
    std::vector<Vector> chains;
    DiagnosticsRow row;
    row.name = names[static_cast<std::size_t>(j)];
    row.acf = Vector::Zero(max_lag + 1);
    for (int c = 0; c < sample.chains; ++c) {
      chains.emplace_back(sample.draws.col(j).segment(c * per, per));
      row.acf += autocorrelation(chains.back(), max_lag);
    }
    row.acf /= static_cast<double>(sample.chains);
    row.ess = effective_sample_size(chains);
    row.rhat = split_rhat(chains);
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

}  // namespace bslope

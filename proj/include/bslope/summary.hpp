#ifndef BSLOPE_SUMMARY_HPP
#define BSLOPE_SUMMARY_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bslope/samplers.hpp"

namespace bslope {

struct SummaryRow {
  std::string name;
  double mean = 0.0;
  double median = 0.0;
  double sd = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

struct SummaryTable {
  double level = 0.95;
  bool hpd = false;
  std::vector<SummaryRow> rows;  ///< beta..., sigma2, sigma, lambda...
  Matrix beta_correlation;

  const SummaryRow& row(const std::string& name) const;
};

/// Type-7 quantile of sorted values.
double quantile_sorted(const std::vector<double>& sorted, double prob);

/// Per-column summaries with equal-tail intervals (shortest intervals when hpd).
/// Throws TooFewDraws below 100 draws and DomainError unless 0 < level < 1.
SummaryTable summarize(const PosteriorSample& sample, double level = 0.95, bool hpd = false);

struct Prediction {
  Vector mean;
  Vector lower;  ///< empty unless intervals were requested
  Vector upper;
};

/// X0 times the posterior mean of beta. With `level`, adds equal-tail intervals of
/// y0 = X0 beta + N(0, sigma2) simulated once per draw.
Prediction predict(const PosteriorSample& sample, const Matrix& x0,
                   std::optional<double> level = std::nullopt, std::uint64_t seed = 7);

/// Autocorrelations r_0..r_max_lag of one series.
Vector autocorrelation(const Eigen::Ref<const Vector>& x, int max_lag);

struct DiagnosticsRow {
  std::string name;
  Vector acf;  ///< lags 0..max_lag, averaged over chains
  double ess = 0.0;
  double rhat = 0.0;  ///< split-chain; NaN when chains are too short
};

struct DiagnosticsReport {
  int max_lag = 50;
  std::vector<DiagnosticsRow> rows;
};

/// Effective sample size of `chains` equal-length series (Geyer initial monotone sequence
/// on the chain-averaged autocorrelations).
double effective_sample_size(const std::vector<Vector>& chains);
/// Split potential scale reduction.
double split_rhat(const std::vector<Vector>& chains);

DiagnosticsReport diagnostics(const PosteriorSample& sample, int max_lag = 50);

}  // namespace bslope

#endif  // BSLOPE_SUMMARY_HPP

#ifndef BSLOPE_SPECIAL_HPP
#define BSLOPE_SPECIAL_HPP

#include <cstdint>
#include <limits>
#include <random>
#include <span>

namespace bslope {

using Rng = std::mt19937_64;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Independent generator for (seed, stream, substream); used to give every
/// chain / replicate / component its own reproducible sequence.
Rng make_stream(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream = 0);

double normal_cdf(double x);
double normal_quantile(double p);

/// log Phi(x), accurate far into the lower tail.
double log_normal_cdf(double x);

/// log(Phi(b) - Phi(a)) for a <= b (either may be infinite); -inf for empty intervals.
double log_normal_interval(double a, double b);

/// log(exp(a) - exp(b)) for a >= b.
double log_diff_exp(double a, double b);

double log_sum_exp(std::span<const double> xs);

/// Standard normal truncated to [a, b]. Inverse CDF, with exponential rejection
/// once the whole interval sits more than 6 standard deviations out.
double sample_truncated_standard_normal(double a, double b, Rng& rng);

/// N(mean, sd^2) truncated to [lo, hi].
double sample_truncated_normal(double mean, double sd, double lo, double hi, Rng& rng);

/// Inverse CDF of the exponential law with rate c restricted to [x0, x1].
/// x1 may be +inf when c > 0. A negative rate is allowed on finite brackets.
double trunc_exp_inverse_cdf(double u, double c, double x0, double x1);

double uniform01(Rng& rng);
double standard_normal(Rng& rng);

}  // namespace bslope

#endif  // BSLOPE_SPECIAL_HPP

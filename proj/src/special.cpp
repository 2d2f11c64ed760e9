#include "bslope/special.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <boost/math/special_functions/erf.hpp>

#include "bslope/errors.hpp"

namespace bslope {

namespace {

constexpr double kSqrt2 = std::numbers::sqrt2;
constexpr double kLogSqrt2Pi = 0.91893853320467274178;

}  // namespace

Rng make_stream(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    static_cast<std::uint32_t>(substream),
                    static_cast<std::uint32_t>(substream >> 32)};
  return Rng(seq);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / kSqrt2); }

double normal_quantile(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("normal_quantile: p outside [0,1]");
  if (p == 0.0) return -kInf;
  if (p == 1.0) return kInf;
  return -kSqrt2 * boost::math::erfc_inv(2.0 * p);
}

double log_normal_cdf(double x) {
  if (x > 5.0) return std::log1p(-0.5 * std::erfc(x / kSqrt2));
  if (x > -35.0) return std::log(0.5 * std::erfc(-x / kSqrt2));
  if (x == -kInf) return -kInf;
  // Asymptotic series of Mills' ratio.
  const double z2 = 1.0 / (x * x);
  const double series = 1.0 - z2 * (1.0 - 3.0 * z2 * (1.0 - 5.0 * z2 * (1.0 - 7.0 * z2)));
  return -0.5 * x * x - std::log(-x) - kLogSqrt2Pi + std::log(series);
}

double log_diff_exp(double a, double b) {
  if (b == -kInf) return a;
  if (b >= a) return -kInf;
  const double d = b - a;
  return a + (d > -std::numbers::ln2 ? std::log(-std::expm1(d)) : std::log1p(-std::exp(d)));
}

double log_normal_interval(double a, double b) {
  if (!(a < b)) return -kInf;
  if (a > 0.0) {
    const double t = a;
    a = -b;
    b = -t;
  }
  if (b <= 0.0) return log_diff_exp(log_normal_cdf(b), log_normal_cdf(a));
  // a <= 0 < b: the mass is at least Phi(b) - 1/2, no cancellation issue.
  const double lower = 0.5 * std::erfc(-a / kSqrt2);
  const double upper = 0.5 * std::erfc(b / kSqrt2);
  return std::log1p(-(lower + upper));
}

double log_sum_exp(std::span<const double> xs) {
  double m = -kInf;
  for (double x : xs) m = std::max(m, x);
  if (m == -kInf || m == kInf) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

double standard_normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

double trunc_exp_inverse_cdf(double u, double c, double x0, double x1) {
  if (!(u >= 0.0 && u <= 1.0)) throw DomainError("trunc_exp_inverse_cdf: u outside [0,1]");
  if (!(x0 < x1)) throw DomainError("trunc_exp_inverse_cdf: requires x0 < x1");
  if (std::isinf(x1)) {
    if (!(c > 0.0)) throw DomainError("trunc_exp_inverse_cdf: infinite bracket needs c > 0");
    return x0 - std::log1p(-u) / c;
  }
  if (c == 0.0) return x0 + u * (x1 - x0);
  if (u == 1.0) return x1;
  // F(x) = (1 - e^{-c(x-x0)}) / (1 - e^{-c(x1-x0)})
  const double width = x1 - x0;
  const double total = -std::expm1(-c * width);
  const double x = x0 - std::log1p(-u * total) / c;
  return std::clamp(x, x0, x1);
}

namespace {

// Robert (1995) exponential proposal for the upper tail [a, b], a > 0.
double sample_upper_tail(double a, double b, Rng& rng) {
  const double rate = 0.5 * (a + std::sqrt(a * a + 4.0));
  for (;;) {
    const double z = std::isinf(b) ? a - std::log1p(-uniform01(rng)) / rate
                                   : trunc_exp_inverse_cdf(uniform01(rng), rate, a, b);
    const double d = z - rate;
    if (uniform01(rng) <= std::exp(-0.5 * d * d)) return z;
  }
}

}  // namespace

double sample_truncated_standard_normal(double a, double b, Rng& rng) {
  if (!(a <= b)) throw DomainError("sample_truncated_standard_normal: empty interval");
  if (a == b) return a;
  if (a > 0.0) return -sample_truncated_standard_normal(-b, -a, rng);
  // Now a <= 0.
  if (b < -6.0) return -sample_upper_tail(-b, -a, rng);
  const double pa = normal_cdf(a);
  const double pb = normal_cdf(b);
  const double z = normal_quantile(pa + uniform01(rng) * (pb - pa));
  return std::clamp(z, a, b);
}

double sample_truncated_normal(double mean, double sd, double lo, double hi, Rng& rng) {
  return mean + sd * sample_truncated_standard_normal((lo - mean) / sd, (hi - mean) / sd, rng);
}

}  // namespace bslope

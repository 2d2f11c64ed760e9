#include "bslope/sorted_l1.hpp"

#include "bslope/errors.hpp"

namespace bslope {

Eigen::VectorXd pava_nonincreasing(const Eigen::VectorXd& y) {
  const Eigen::Index p = y.size();
  // Blocks on a stack: (sum, count). A new block merges while it exceeds the mean above it.
  std::vector<double> sums;
  std::vector<Eigen::Index> counts;
  sums.reserve(static_cast<std::size_t>(p));
  counts.reserve(static_cast<std::size_t>(p));
  for (Eigen::Index i = 0; i < p; ++i) {
    double s = y(i);
    Eigen::Index c = 1;
    while (!sums.empty() && sums.back() / static_cast<double>(counts.back()) <=
                                s / static_cast<double>(c)) {
      s += sums.back();
      c += counts.back();
      sums.pop_back();
      counts.pop_back();
    }
    sums.push_back(s);
    counts.push_back(c);
  }
  Eigen::VectorXd out(p);
  Eigen::Index pos = 0;
  for (std::size_t b = 0; b < sums.size(); ++b) {
    const double mean = sums[b] / static_cast<double>(counts[b]);
    out.segment(pos, counts[b]).setConstant(mean);
    pos += counts[b];
  }
  return out;
}

Eigen::VectorXd project_monotone_cone(const Eigen::VectorXd& v) {
  return pava_nonincreasing(v).cwiseMax(0.0);
}

Eigen::VectorXd prox_sorted_l1(const Eigen::VectorXd& v, const Eigen::VectorXd& theta) {
  if (v.size() != theta.size()) throw DimensionMismatch("prox_sorted_l1: size mismatch");
  const auto order = magnitude_order(v);
  const Eigen::Index p = v.size();
  Eigen::VectorXd shifted(p);
  for (Eigen::Index r = 0; r < p; ++r) shifted(r) = std::abs(v(order[r])) - theta(r);
  const Eigen::VectorXd fitted = project_monotone_cone(shifted);
  Eigen::VectorXd out(p);
  for (Eigen::Index r = 0; r < p; ++r) {
    const Eigen::Index i = order[r];
    out(i) = v(i) < 0 ? -fitted(r) : fitted(r);
  }
  return out;
}

}  // namespace bslope

#ifndef BSLOPE_SORTED_L1_HPP
#define BSLOPE_SORTED_L1_HPP

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

namespace bslope {

/// Indices of v ordered by decreasing |v_i|; ties keep the original index order.
template <typename Derived>
std::vector<Eigen::Index> magnitude_order(const Eigen::MatrixBase<Derived>& v) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(v.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return std::abs(v(a)) > std::abs(v(b));
  });
  return order;
}

/// Sorted-l1 norm sum_i lambda_i |beta|_(i).
template <typename DerivedB, typename DerivedL>
typename DerivedB::Scalar sorted_l1_norm(const Eigen::MatrixBase<DerivedB>& beta,
                                         const Eigen::MatrixBase<DerivedL>& lambda) {
  using Scalar = typename DerivedB::Scalar;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> mags = beta.cwiseAbs();
  std::sort(mags.data(), mags.data() + mags.size(), std::greater<Scalar>());
  return mags.dot(lambda.template cast<Scalar>());
}

/// |beta| sorted in decreasing order.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> sorted_magnitudes(
    const Eigen::MatrixBase<Derived>& beta) {
  Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> mags = beta.cwiseAbs();
  std::sort(mags.data(), mags.data() + mags.size(), std::greater<typename Derived::Scalar>());
  return mags;
}

/// The minimum-norm-tie subgradient used by HMC: lambda_{rank(i)} sign(beta_i),
/// stable ranks, and 0 where beta_i == 0.
template <typename DerivedB, typename DerivedL>
Eigen::Matrix<typename DerivedB::Scalar, Eigen::Dynamic, 1> sorted_l1_subgradient(
    const Eigen::MatrixBase<DerivedB>& beta, const Eigen::MatrixBase<DerivedL>& lambda) {
  using Scalar = typename DerivedB::Scalar;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> g(beta.size());
  const auto order = magnitude_order(beta);
  for (std::size_t r = 0; r < order.size(); ++r) {
    const Scalar b = beta(order[r]);
    g(order[r]) = b > 0 ? Scalar(lambda(r)) : (b < 0 ? -Scalar(lambda(r)) : Scalar(0));
  }
  return g;
}

/// Least-squares nonincreasing fit of y (pool adjacent violators, one stack pass).
Eigen::VectorXd pava_nonincreasing(const Eigen::VectorXd& y);

/// Euclidean projection onto {x_1 >= x_2 >= ... >= x_p >= 0}.
Eigen::VectorXd project_monotone_cone(const Eigen::VectorXd& v);

/// argmin_b 1/2 ||b - v||^2 + sum_i theta_i |b|_(i) for nonincreasing theta >= 0.
Eigen::VectorXd prox_sorted_l1(const Eigen::VectorXd& v, const Eigen::VectorXd& theta);

}  // namespace bslope

#endif  // BSLOPE_SORTED_L1_HPP

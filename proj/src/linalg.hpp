#pragma once

// Small dense linear-algebra helpers shared by the TT routines.

#include <algorithm>

#include <Eigen/Dense>

namespace ttgp::detail {

struct TruncatedSvd {
  Eigen::MatrixXd u;  // m x r
  Eigen::VectorXd s;  // r
  Eigen::MatrixXd v;  // n x r
};

/// Smallest rank r >= 1 whose discarded tail satisfies
/// sqrt(sum_{j >= r} s_j^2) <= delta. `s` is sorted descending.
inline Eigen::Index truncation_rank(const Eigen::VectorXd& s, double delta) {
  const Eigen::Index full = s.size();
  double tail = 0.0;
  Eigen::Index r = full;
  const double delta2 = delta * delta;
  while (r > 1) {
    const double next = tail + s(r - 1) * s(r - 1);
    if (next > delta2) break;
    tail = next;
    --r;
  }
  return std::max<Eigen::Index>(r, 1);
}

template <typename Derived>
TruncatedSvd truncated_svd(const Eigen::MatrixBase<Derived>& m, double delta) {
  Eigen::BDCSVD<Eigen::MatrixXd> svd(m.derived().eval(), Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  Eigen::Index r = s.size() == 0 ? 1 : truncation_rank(s, delta);
  TruncatedSvd out;
  if (s.size() == 0) {
    out.u = Eigen::MatrixXd::Zero(m.rows(), 1);
    out.s = Eigen::VectorXd::Zero(1);
    out.v = Eigen::MatrixXd::Zero(m.cols(), 1);
    return out;
  }
  out.u = svd.matrixU().leftCols(r);
  out.s = s.head(r);
  out.v = svd.matrixV().leftCols(r);
  return out;
}

struct ThinQr {
  Eigen::MatrixXd q;  // m x k, orthonormal columns
  Eigen::MatrixXd r;  // k x n, upper triangular
};

template <typename Derived>
ThinQr thin_qr(const Eigen::MatrixBase<Derived>& m) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(m.derived().eval());
  const Eigen::Index k = std::min(m.rows(), m.cols());
  ThinQr out;
  out.q = qr.householderQ() * Eigen::MatrixXd::Identity(m.rows(), k);
  out.r = qr.matrixQR().topRows(k).template triangularView<Eigen::Upper>();
  return out;
}

/// Number of singular values above rel_tol * sigma_max (0 for a zero matrix).
inline Eigen::Index numerical_rank(const Eigen::VectorXd& singular_values, double rel_tol) {
  if (singular_values.size() == 0 || !(singular_values(0) > 0.0)) return 0;
  const double cut = rel_tol * singular_values(0);
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < singular_values.size(); ++i) {
    if (singular_values(i) > cut) ++r;
  }
  return r;
}

}  // namespace ttgp::detail

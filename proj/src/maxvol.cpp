#include "ttgp/maxvol.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <string>

#include "linalg.hpp"
#include "sampling.hpp"

namespace ttgp {

namespace {

Index checked_rank(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  return detail::numerical_rank(svd.singularValues(), kRankTolerance);
}

// Rows picked by Gaussian elimination with partial (row) pivoting.
std::vector<Index> pivot_rows(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  Eigen::MatrixXd a = m;
  const Index n = a.rows();
  const Index r = a.cols();
  std::vector<bool> used(static_cast<std::size_t>(n), false);
  std::vector<Index> rows;
  rows.reserve(static_cast<std::size_t>(r));
  for (Index j = 0; j < r; ++j) {
    Index p = -1;
    double best = -1.0;
    for (Index i = 0; i < n; ++i) {
      if (used[static_cast<std::size_t>(i)]) continue;
      if (std::abs(a(i, j)) > best) {
        best = std::abs(a(i, j));
        p = i;
      }
    }
    used[static_cast<std::size_t>(p)] = true;
    rows.push_back(p);
    if (best == 0.0) continue;
    for (Index i = 0; i < n; ++i) {
      if (used[static_cast<std::size_t>(i)]) continue;
      const double f = a(i, j) / a(p, j);
      a.row(i).tail(r - j - 1) -= f * a.row(p).tail(r - j - 1);
    }
  }
  return rows;
}

Eigen::MatrixXd coefficients(const Eigen::Ref<const Eigen::MatrixXd>& m,
                             const std::vector<Index>& rows) {
  Eigen::MatrixXd sub(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t j = 0; j < rows.size(); ++j) sub.row(static_cast<Index>(j)) = m.row(rows[j]);
  // B = M * sub^{-1}  <=>  sub^T * B^T = M^T
  return sub.transpose().partialPivLu().solve(m.transpose()).transpose();
}

// Largest |B(i, j)|; ties resolved to the lowest (i, j).
double max_abs_entry(const Eigen::MatrixXd& b, Index& bi, Index& bj) {
  double best = -1.0;
  bi = 0;
  bj = 0;
  for (Index i = 0; i < b.rows(); ++i) {
    for (Index j = 0; j < b.cols(); ++j) {
      const double v = std::abs(b(i, j));
      if (v > best) {
        best = v;
        bi = i;
        bj = j;
      }
    }
  }
  return best;
}

}  // namespace

MaxvolResult maxvol(const Eigen::Ref<const Eigen::MatrixXd>& m, double delta, int max_iters) {
  const Index n = m.rows();
  const Index r = m.cols();
  if (r < 1 || n < r) {
    throw DomainError("maxvol needs an n x r matrix with n >= r >= 1, got " + std::to_string(n) +
                      " x " + std::to_string(r));
  }
  const Index rank = checked_rank(m);
  if (rank < r) {
    throw DegeneracyError("maxvol input has numerical rank " + std::to_string(rank) + " < " +
                              std::to_string(r),
                          rank);
  }

  MaxvolResult out;
  out.rows = pivot_rows(m);
  Eigen::MatrixXd b = coefficients(m, out.rows);
  const double limit = 1.0 + delta;
  Index bi = 0;
  Index bj = 0;
  while (true) {
    const double top = max_abs_entry(b, bi, bj);
    if (top <= limit) {
      out.converged = true;
      break;
    }
    if (out.iterations >= max_iters) break;
    // Swap row bi into slot bj: B <- B - B(:, j) (B(i, :) - e_j^T) / B(i, j).
    Eigen::RowVectorXd v = b.row(bi);
    v(bj) -= 1.0;
    const Eigen::VectorXd u = b.col(bj) / b(bi, bj);
    b.noalias() -= u * v;
    out.rows[static_cast<std::size_t>(bj)] = bi;
    ++out.iterations;
  }
  out.coeffs = coefficients(m, out.rows);
  if (out.converged) out.converged = max_abs_entry(out.coeffs, bi, bj) <= limit;
  return out;
}

Skeleton rank_reveal_columns(const MatrixOracle& m, Index r, const RankRevealOptions& opts) {
  if (r < 1 || r > m.rows || r > m.cols) {
    throw DomainError("rank_reveal_columns: rank " + std::to_string(r) +
                      " not admissible for a " + std::to_string(m.rows) + " x " +
                      std::to_string(m.cols) + " matrix");
  }
  std::mt19937_64 rng(opts.seed);
  const Index pool = std::min(m.cols, r + std::max<Index>(0, opts.oversample));
  std::vector<Index> candidates = detail::sample_distinct(m.cols, pool, rng);

  const Eigen::MatrixXd c_pool = m.columns(candidates);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(c_pool);
  {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(c_pool);
    const Index rank = detail::numerical_rank(svd.singularValues(), kRankTolerance);
    if (rank < r) {
      throw DegeneracyError("sampled columns have numerical rank " + std::to_string(rank) +
                                " < " + std::to_string(r),
                            rank);
    }
  }
  Skeleton s;
  for (Index j = 0; j < r; ++j) {
    s.cols.push_back(candidates[static_cast<std::size_t>(qr.colsPermutation().indices()(j))]);
  }

  for (int sweep = 0; sweep < std::max(1, opts.sweeps); ++sweep) {
    const Eigen::MatrixXd c = m.columns(s.cols);
    s.rows = maxvol(c, opts.delta, opts.max_iters).rows;
    const Eigen::MatrixXd rt = m.rows_at(s.rows).transpose();
    s.cols = maxvol(rt, opts.delta, opts.max_iters).rows;
  }
  return s;
}

Eigen::MatrixXd skeleton_reconstruct(const MatrixOracle& m, const Skeleton& s) {
  const Eigen::MatrixXd c = m.columns(s.cols);
  const Eigen::MatrixXd rws = m.rows_at(s.rows);
  Eigen::MatrixXd core(static_cast<Index>(s.rows.size()), static_cast<Index>(s.cols.size()));
  for (std::size_t a = 0; a < s.rows.size(); ++a) {
    for (std::size_t b = 0; b < s.cols.size(); ++b) {
      core(static_cast<Index>(a), static_cast<Index>(b)) = c(s.rows[a], static_cast<Index>(b));
    }
  }
  return c * core.partialPivLu().solve(rws);
}

}  // namespace ttgp

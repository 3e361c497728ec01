#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "ttgp/errors.hpp"

namespace ttgp {

using Index = Eigen::Index;

/// Singular values at or below this fraction of sigma_max count as zero.
inline constexpr double kRankTolerance = 1e-12;

/// Row selection of a tall matrix M (n x r). Row indices are 0-based and
/// ordered so that coeffs.row(rows[j]) is the j-th unit vector.
struct MaxvolResult {
  std::vector<Index> rows;
  Eigen::MatrixXd coeffs;  // M * M[rows, :]^{-1}, n x r
  int iterations = 0;
  bool converged = false;
};

/// Greedy row-swap maxvol. Starts from the rows chosen by partial-pivot
/// elimination and swaps in the row holding the largest |coeff| while that
/// exceeds 1 + delta. Ties go to the lowest (row, column).
///
/// Throws DegeneracyError when M is numerically rank deficient.
MaxvolResult maxvol(const Eigen::Ref<const Eigen::MatrixXd>& m, double delta = 0.01,
                    int max_iters = 100);

/// Lazily evaluated n x N matrix: whole rows or columns are fetched on demand.
struct MatrixOracle {
  Index rows = 0;
  Index cols = 0;
  /// Returns M(:, cols) as an n x |cols| matrix.
  std::function<Eigen::MatrixXd(std::span<const Index>)> columns;
  /// Returns M(rows, :) as a |rows| x N matrix.
  std::function<Eigen::MatrixXd(std::span<const Index>)> rows_at;
};

struct Skeleton {
  std::vector<Index> rows;  // I, |I| = r
  std::vector<Index> cols;  // J, |J| = r
};

struct RankRevealOptions {
  int sweeps = 2;
  /// Extra random columns drawn on top of r before the first pivoted
  /// selection.
  Index oversample = 10;
  double delta = 0.01;
  int max_iters = 100;
  std::uint64_t seed = 0;
};

/// Row/column alternating maxvol. Starts from r + oversample uniformly random
/// distinct columns, keeps the r chosen by column-pivoted QR, then alternates
/// maxvol on C = M(:, J) and on R^T = M(I, :)^T for `sweeps` rounds.
///
/// Throws DegeneracyError (carrying the numerical rank) when the sampled
/// columns or rows have rank below r.
Skeleton rank_reveal_columns(const MatrixOracle& m, Index r, const RankRevealOptions& opts = {});

/// C * M(I, J)^{-1} * R for a skeleton, materialized densely.
Eigen::MatrixXd skeleton_reconstruct(const MatrixOracle& m, const Skeleton& s);

}  // namespace ttgp

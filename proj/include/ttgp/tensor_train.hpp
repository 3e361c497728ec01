#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "ttgp/errors.hpp"

namespace ttgp {

using Index = Eigen::Index;

/// Largest number of elements a DenseTensor may hold unless a caller passes
/// an explicit cap.
inline constexpr Index kDefaultDenseCap = 10'000'000;

/// A multi-index (i_1, ..., i_d) with 1-based components.
class MultiIndex {
 public:
  MultiIndex() = default;
  explicit MultiIndex(std::vector<Index> one_based) : idx_(std::move(one_based)) {}
  MultiIndex(std::initializer_list<Index> one_based) : idx_(one_based) {}

  static MultiIndex from_zero_based(std::span<const Index> zero_based);

  std::size_t size() const { return idx_.size(); }
  Index operator[](std::size_t k) const { return idx_[k]; }
  const std::vector<Index>& values() const { return idx_; }
  std::vector<Index> zero_based() const;

  /// Throws DomainError unless the index has one component per mode and each
  /// lies in [1, n_k].
  void check(std::span<const Index> mode_sizes) const;

  friend bool operator==(const MultiIndex&, const MultiIndex&) = default;

 private:
  std::vector<Index> idx_;
};

/// One r_{k-1} x n_k x r_k core. Storage is first-index-fastest, so element
/// (a, i, b) lives at a + r_left * (i + n * b). That makes the left unfolding
/// ((r_left * n) x r_right) and the right unfolding (r_left x (n * r_right))
/// plain column-major views of the same buffer.
class Core {
 public:
  using ConstMap = Eigen::Map<const Eigen::MatrixXd>;
  using Map = Eigen::Map<Eigen::MatrixXd>;
  using ConstSlice = Eigen::Map<const Eigen::MatrixXd, 0, Eigen::OuterStride<>>;
  using Slice = Eigen::Map<Eigen::MatrixXd, 0, Eigen::OuterStride<>>;

  Core() = default;
  Core(Index r_left, Index n, Index r_right);
  Core(Index r_left, Index n, Index r_right, std::vector<double> data);

  /// Builds a core from its (r_left * n) x r_right left unfolding.
  static Core from_left_unfolding(const Eigen::MatrixXd& m, Index r_left, Index n);
  /// Builds a core from its r_left x (n * r_right) right unfolding.
  static Core from_right_unfolding(const Eigen::MatrixXd& m, Index n, Index r_right);

  Index r_left() const { return r_left_; }
  Index n() const { return n_; }
  Index r_right() const { return r_right_; }
  Index size() const { return static_cast<Index>(data_.size()); }

  double operator()(Index a, Index i, Index b) const {
    return data_[static_cast<std::size_t>(a + r_left_ * (i + n_ * b))];
  }
  double& operator()(Index a, Index i, Index b) {
    return data_[static_cast<std::size_t>(a + r_left_ * (i + n_ * b))];
  }

  ConstSlice slice(Index i) const {
    return ConstSlice(data_.data() + r_left_ * i, r_left_, r_right_,
                      Eigen::OuterStride<>(r_left_ * n_));
  }
  Slice slice(Index i) {
    return Slice(data_.data() + r_left_ * i, r_left_, r_right_,
                 Eigen::OuterStride<>(r_left_ * n_));
  }
  ConstMap left_unfolding() const { return ConstMap(data_.data(), r_left_ * n_, r_right_); }
  Map left_unfolding() { return Map(data_.data(), r_left_ * n_, r_right_); }
  ConstMap right_unfolding() const { return ConstMap(data_.data(), r_left_, n_ * r_right_); }
  Map right_unfolding() { return Map(data_.data(), r_left_, n_ * r_right_); }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  friend bool operator==(const Core&, const Core&) = default;

 private:
  Index r_left_ = 0;
  Index n_ = 0;
  Index r_right_ = 0;
  std::vector<double> data_;
};

/// A d-way tensor as a chain of 3-way cores with ranks (r_0, ..., r_d),
/// r_0 = r_d = 1.
class TensorTrain {
 public:
  TensorTrain() = default;
  /// Validates the rank chain; throws ShapeError on any inconsistency.
  explicit TensorTrain(std::vector<Core> cores);

  Index order() const { return static_cast<Index>(cores_.size()); }
  const std::vector<Index>& mode_sizes() const { return modes_; }
  const std::vector<Index>& ranks() const { return ranks_; }
  /// Scalar rank max_k r_k.
  Index max_rank() const;
  /// Number of stored core entries, sum_k r_{k-1} n_k r_k.
  Index parameter_count() const;

  const Core& core(Index k) const { return cores_[static_cast<std::size_t>(k)]; }
  /// Mutable access to core values; the shape stays fixed.
  std::span<double> core_values(Index k) { return cores_[static_cast<std::size_t>(k)].data(); }
  Core::Slice core_slice(Index k, Index i) { return cores_[static_cast<std::size_t>(k)].slice(i); }
  const std::vector<Core>& cores() const { return cores_; }

  friend bool operator==(const TensorTrain&, const TensorTrain&) = default;

 private:
  std::vector<Index> modes_;
  std::vector<Index> ranks_;
  std::vector<Core> cores_;
};

/// Dense tensor with first-index-fastest (column-major) linearization.
class DenseTensor {
 public:
  DenseTensor() = default;
  explicit DenseTensor(std::vector<Index> mode_sizes, Index cap = kDefaultDenseCap);
  DenseTensor(std::vector<Index> mode_sizes, std::vector<double> values,
              Index cap = kDefaultDenseCap);

  const std::vector<Index>& mode_sizes() const { return modes_; }
  Index order() const { return static_cast<Index>(modes_.size()); }
  Index numel() const { return static_cast<Index>(values_.size()); }

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  double at(const MultiIndex& idx) const;
  double& at(const MultiIndex& idx);
  Index linear_index(std::span<const Index> zero_based) const;

  /// The k-th unfolding: rows enumerate (i_1..i_k), columns (i_{k+1}..i_d).
  Eigen::Map<const Eigen::MatrixXd> unfolding(Index k) const;

  double frobenius_norm() const;

 private:
  std::vector<Index> modes_;
  std::vector<double> values_;
};

/// Product of mode sizes as a double (safe for grids too large for Index).
double grid_size(std::span<const Index> mode_sizes);

// --- core algebra ---------------------------------------------------------

/// Entry at a 1-based multi-index.
double tt_eval(const TensorTrain& tt, const MultiIndex& idx);
/// Entry at a 0-based multi-index; no range checks.
double tt_eval_unchecked(const TensorTrain& tt, std::span<const Index> zero_based);

DenseTensor tt_full(const TensorTrain& tt, Index cap = kDefaultDenseCap);

/// TT-SVD with per-unfolding threshold tol * ||x||_F / sqrt(d - 1).
TensorTrain tt_from_dense(const DenseTensor& x, double tol);

/// Right-to-left orthogonalization followed by left-to-right truncated SVD.
/// Guarantees ||result - tt||_F <= tol * ||tt||_F.
TensorTrain tt_round(const TensorTrain& tt, double tol);

/// Left-orthogonalizes cores 1..d-1 in place of a copy (QR sweep).
TensorTrain tt_orthogonalize_left(const TensorTrain& tt);
/// Right-orthogonalizes cores 2..d (LQ sweep).
TensorTrain tt_orthogonalize_right(const TensorTrain& tt);

double tt_dot(const TensorTrain& a, const TensorTrain& b);
double tt_norm(const TensorTrain& tt);

/// Scales the first core by `alpha`.
TensorTrain tt_scale(const TensorTrain& tt, double alpha);

/// I.i.d. standard normal cores. `ranks` has d+1 entries with r_0 = r_d = 1.
TensorTrain tt_random(std::span<const Index> mode_sizes, std::span<const Index> ranks,
                      std::uint64_t seed);

/// All-`value` rank-1 tensor.
TensorTrain tt_constant(std::span<const Index> mode_sizes, double value);

/// Caps a uniform target rank at the largest rank every unfolding admits.
std::vector<Index> feasible_ranks(std::span<const Index> mode_sizes, Index rank);
/// Caps an arbitrary rank vector the same way.
std::vector<Index> feasible_ranks(std::span<const Index> mode_sizes,
                                  std::span<const Index> ranks);

}  // namespace ttgp

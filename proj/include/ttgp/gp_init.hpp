#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "ttgp/cross.hpp"
#include "ttgp/gp.hpp"
#include "ttgp/tensor_train.hpp"

namespace ttgp {

/// Observed entries of a tensor: N distinct 1-based multi-indices and their
/// values. Indices are stored 0-based internally.
class ObservationSet {
 public:
  ObservationSet() = default;
  /// `indices` is N x d with 1-based entries. Throws DomainError on an index
  /// out of range or a duplicated row, ShapeError on size mismatches.
  ObservationSet(std::vector<Index> mode_sizes, const Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic>& indices,
                 Eigen::VectorXd values);
  /// Same, from packed row-major 1-based indices.
  ObservationSet(std::vector<Index> mode_sizes, std::span<const Index> packed_one_based,
                 Eigen::VectorXd values);

  Index order() const { return static_cast<Index>(modes_.size()); }
  Index size() const { return values_.size(); }
  const std::vector<Index>& mode_sizes() const { return modes_; }
  const Eigen::VectorXd& values() const { return values_; }
  double value(Index row) const { return values_(row); }
  /// 0-based index of observation `row`.
  std::span<const Index> zero_based(Index row) const {
    return {idx_.data() + row * order(), static_cast<std::size_t>(order())};
  }
  MultiIndex index(Index row) const;
  /// N x d matrix of 1-based indices.
  Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic> index_matrix() const;
  /// N x d matrix of rescaled inputs in [0, 1]^d.
  Eigen::MatrixXd rescaled_inputs() const;
  /// Observations at the given rows, in that order.
  ObservationSet subset(std::span<const Index> rows) const;

 private:
  void init(std::span<const Index> packed_one_based);

  std::vector<Index> modes_;
  std::vector<Index> idx_;
  Eigen::VectorXd values_;
};

/// x_k = (i_k - 1) / (n_k - 1), or 0.5 when n_k = 1.
std::vector<double> rescale_index(const MultiIndex& idx, std::span<const Index> mode_sizes);
/// 0-based variant without range checks, written into `out`.
void rescale_zero_based(std::span<const Index> idx, std::span<const Index> mode_sizes,
                        std::span<double> out);

/// CSV with header i_1,...,i_d,y. Mode sizes come from `mode_sizes` when
/// non-empty, otherwise from the sidecar `<csv>.json` ({"mode_sizes": [...]}).
ObservationSet load_observations(const std::filesystem::path& csv, std::span<const Index> mode_sizes = {});
/// Writes the CSV and its sidecar.
void save_observations(const ObservationSet& obs, const std::filesystem::path& csv);
/// Reads mode sizes from a JSON file with a "mode_sizes" array.
std::vector<Index> load_mode_sizes(const std::filesystem::path& path);

/// The grid function index -> GP posterior mean at the rescaled index.
BlackBox gp_mean_black_box(const GpModel& model, std::span<const Index> mode_sizes);

struct InitOptions {
  GpFitOptions gp;
  AdaptiveCrossOptions cross;
};

struct InitReport {
  TensorTrain tt0;
  GpModel gp;
  CrossReport cross;
  /// Mean squared error of tt0 on the observations.
  double train_error = 0.0;
};

/// Fits a GP to the rescaled observations and approximates its mean on the
/// whole grid with adaptive TT-cross. Failures are rethrown as StageError
/// labelled "gp" or "cross".
InitReport gp_tt_init(const ObservationSet& obs, const InitOptions& opts = {});

/// Random Gaussian TT scaled to ||tt||_F = ||y||_2 * sqrt(prod n_k / N).
TensorTrain random_init(const ObservationSet& obs, std::span<const Index> ranks, std::uint64_t seed);
/// Uniform rank, capped by what each unfolding admits.
TensorTrain random_init(const ObservationSet& obs, Index rank, std::uint64_t seed);

}  // namespace ttgp

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "ttgp/completion.hpp"
#include "ttgp/gp_init.hpp"
#include "ttgp/kernel.hpp"

namespace ttgp {

/// A random-feature sample from a zero-mean stationary GP prior on R^d:
///
///   f(x) = sqrt(2 / m) * sum_j w_j cos(omega_j . x + b_j)
struct SyntheticFunction {
  KernelFamily family = KernelFamily::RBF;
  double lengthscale = 1.0;
  std::uint64_t seed = 0;
  Eigen::MatrixXd omega;  // m x d
  Eigen::VectorXd phases;
  Eigen::VectorXd weights;

  Index dimension() const { return omega.cols(); }
  Index features() const { return omega.rows(); }
  double operator()(std::span<const double> x) const;
  /// Rows of `x` are points.
  Eigen::VectorXd evaluate(const Eigen::MatrixXd& x) const;
};

/// Frequencies come from the kernel's spectral density: Gaussian for RBF,
/// Student-t with 2 nu degrees of freedom for the Matern families.
SyntheticFunction sample_gp_function(KernelFamily family, double lengthscale, Index d, Index m,
                                     std::uint64_t seed);

/// Disjoint uniform samples of grid positions without replacement. Rows are
/// 1-based multi-indices.
struct IndexSplit {
  Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic> train;
  Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic> test;
};

IndexSplit sample_omega(std::span<const Index> mode_sizes, Index n_train, Index n_test, std::uint64_t seed);

/// Sample sizes that fit a grid of `grid` cells. When train + test exceed the
/// grid, the test set shrinks to what is left but keeps at least a tenth of
/// the grid (capped at the requested size); the training set takes the rest.
std::pair<Index, Index> fit_sample_sizes(double grid, Index n_train, Index n_test);

/// Summary value of an improvement: clamped to [-1, 1], NaN passes through.
double clamp_improvement(double raw);

double mse(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth);
/// mse divided by the biased variance of `truth`. Throws DomainError when
/// that variance is zero.
double mse_rel(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth);

/// One experiment configuration. In the JSON form every field marked "grid"
/// may be a scalar or a list; lists expand into the Cartesian product.
struct ExperimentConfig {
  std::vector<KernelFamily> kernels{KernelFamily::RBF};  // grid
  std::vector<Index> dims{4};                            // grid
  std::vector<Index> sizes{10};                          // grid
  std::vector<Index> n_train{1000};                      // grid
  std::vector<std::uint64_t> seeds{0};                   // grid
  Index n_test = 1000;
  /// "rff" (GP-prior sample) or "constant".
  std::string function = "rff";
  double constant = 1.0;
  double lengthscale = 0.3;
  Index features = 2048;
  /// Shrink oversized cells with fit_sample_sizes instead of failing them.
  bool fit_to_grid = true;
  /// External observations replace the synthetic function; the test set is
  /// then a seeded hold-out of those observations.
  std::optional<std::filesystem::path> observations;

  CompletionOptions optimizer;
  /// Ranks tried for the random arm; empty means 1..min n_k.
  std::vector<Index> random_ranks;

  /// GP model family for the initialization. Unset ("match" in JSON) uses
  /// the synthetic function's family, or RBF for external observations.
  std::optional<KernelFamily> init_kernel;
  InitOptions init;

  static ExperimentConfig from_json(const nlohmann::json& doc);
  static ExperimentConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

/// One report row: one arm of one grid cell.
struct ExperimentRow {
  std::string kernel;
  Index d = 0;
  Index n = 0;
  Index n_train = 0;
  std::uint64_t seed = 0;
  std::string optimizer;
  std::string arm;  // "random" or "gp"
  Index rank_max = 0;
  double init_train_mse = 0.0;
  double train_mse = 0.0;
  double test_mse = 0.0;
  /// NaN when the test values are constant.
  double test_mse_rel = 0.0;
  /// test_mse_rel, or test_mse when the relative error is undefined.
  double score = 0.0;
  int iters = 0;
  std::uint64_t evals = 0;
  double seconds = 0.0;
  /// score(random) - score(gp); NaN when an arm failed.
  double improvement = 0.0;
  double improvement_clamped = 0.0;
  std::string status = "ok";
  std::string error;
};

struct ExperimentReport {
  std::vector<ExperimentRow> rows;
};

/// Runs every grid cell, both arms per cell. Arm failures are recorded in
/// the row rather than thrown.
ExperimentReport run_experiment(const ExperimentConfig& cfg);

/// CSV, one row per arm and cell. Seconds are written only when asked for.
void write_report_csv(const ExperimentReport& report, const std::filesystem::path& path, bool with_seconds = false);

}  // namespace ttgp

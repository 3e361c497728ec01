#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ttgp/gp_init.hpp"
#include "ttgp/tensor_train.hpp"

namespace ttgp {

enum class CompletionMethod { ALS, SGD };

std::string to_string(CompletionMethod m);
/// "als" or "sgd"; throws ConfigError.
CompletionMethod parse_completion_method(std::string_view name);

/// What the ALS ridge term pulls each slice towards.
///   Zero      lambda * ||slice||^2
///   Previous  lambda * ||slice - slice_before_update||^2
enum class RidgeAnchor { Zero, Previous };

std::string to_string(RidgeAnchor a);
RidgeAnchor parse_ridge_anchor(std::string_view name);

struct CompletionOptions {
  CompletionMethod method = CompletionMethod::ALS;
  /// ALS sweeps or SGD steps.
  int n_iters = 100;
  /// Ridge weight; unset means 1e-10 * var(y).
  std::optional<double> als_ridge;
  RidgeAnchor anchor = RidgeAnchor::Previous;
  /// Initial SGD step; unset means 1e-2 / sqrt(max rank).
  std::optional<double> sgd_lr;
  double sgd_decay = 1e-3;
  Index sgd_batch = 32;
  std::uint64_t seed = 0;
  /// Objective recorded every this many iterations (plus the first and last).
  int trace_every = 1;
};

struct CompletionTrace {
  std::vector<int> iters;
  std::vector<double> objective;
  std::vector<double> seconds;
  TensorTrain tt;
};

/// Sum over observations of (tt(i) - y_i)^2.
double objective(const TensorTrain& tt, const ObservationSet& obs);

/// Gradient of the batch objective with respect to every core. `batch` holds
/// observation rows and may repeat; it must not be empty.
std::vector<Core> grad_cores(const TensorTrain& tt, const ObservationSet& obs, std::span<const Index> batch);
/// Gradient of the full objective.
std::vector<Core> grad_cores(const TensorTrain& tt, const ObservationSet& obs);

/// One ALS sweep: left-to-right over all cores, then right-to-left. Each core
/// is updated slice by slice with a ridge least-squares solve; slices no
/// observation touches stay as they are. When `half_sweeps` is given the
/// objective after each half-sweep is appended to it.
TensorTrain als_sweep(const TensorTrain& tt, const ObservationSet& obs, double lambda,
                      RidgeAnchor anchor = RidgeAnchor::Previous, std::vector<double>* half_sweeps = nullptr);

/// Refines tt0 with ALS or SGD at fixed ranks. Throws DivergenceError when the
/// objective becomes non-finite.
CompletionTrace complete(const TensorTrain& tt0, const ObservationSet& obs, const CompletionOptions& opts = {});

/// CSV with header iter,objective,seconds. Seconds are left empty unless
/// `with_seconds` is set, so repeated runs give identical files.
void write_trace_csv(const CompletionTrace& trace, const std::filesystem::path& path, bool with_seconds = false);

}  // namespace ttgp

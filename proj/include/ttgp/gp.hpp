#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "ttgp/kernel.hpp"

namespace ttgp {

/// Log marginal likelihood of centered targets and its gradient with respect
/// to the log-hyperparameters, ordered
///
///   [log l_1, ..., log l_L, log amplitude, log noise]
///
/// (L = 1 for an isotropic kernel). The noise component is zero when
/// noise == 0.
struct LmlResult {
  double value = 0.0;
  Eigen::VectorXd gradient;
  double jitter = 0.0;
};

LmlResult log_marginal_likelihood(const Kernel& k, double noise, const Eigen::MatrixXd& x,
                                  const Eigen::VectorXd& y_centered, bool with_gradient = true);

/// Packs/unpacks the log-hyperparameter vector used above.
Eigen::VectorXd pack_log_params(const Kernel& k, double noise);
void unpack_log_params(const Eigen::VectorXd& theta, Kernel& k, double& noise);

struct GpFitOptions {
  KernelFamily family = KernelFamily::RBF;
  /// Per-dimension lengthscales. Unset: anisotropic for RBF, isotropic
  /// otherwise.
  std::optional<bool> anisotropic;
  /// Starting lengthscales, as multiples of the input span.
  std::vector<double> start_lengthscales{0.1, 0.3, 1.0, 3.0};
  int max_iters = 200;
  double grad_tol = 1e-6;
  /// Larger training sets are replaced by a seeded uniform subsample.
  Index max_train = 4000;
  /// When positive and smaller than the training set, hyperparameters are
  /// searched on a seeded subsample of this size; the final model is still
  /// conditioned on the whole training set.
  Index hyper_max_train = 0;
  /// After a subsampled search, L-BFGS iterations on the whole training set
  /// starting from the subsample optimum.
  int polish_iters = 20;
  std::uint64_t seed = 0;
  /// Lower bound on the noise variance relative to var(y).
  double min_noise_ratio = 1e-12;
};

/// Fitted GP: inputs, centered targets, hyperparameters, Cholesky factor of
/// K_y and dual weights alpha = K_y^{-1} (y - mean).
class GpModel {
 public:
  GpModel() = default;

  /// Conditions on (x, y) with fixed hyperparameters.
  static GpModel condition(Eigen::MatrixXd x, const Eigen::VectorXd& y, Kernel k, double noise);

  double predict_mean(std::span<const double> point) const;
  double predict_var(std::span<const double> point) const;
  /// Rows of `points` are query points.
  Eigen::VectorXd predict_mean(const Eigen::MatrixXd& points) const;
  Eigen::VectorXd predict_var(const Eigen::MatrixXd& points) const;

  const Kernel& kernel() const { return kernel_; }
  double noise() const { return noise_; }
  double jitter() const { return jitter_; }
  double y_mean() const { return y_mean_; }
  const Eigen::MatrixXd& inputs() const { return x_; }
  const Eigen::VectorXd& dual() const { return alpha_; }
  Index dimension() const { return x_.cols(); }
  Index size() const { return x_.rows(); }

  /// LML of the final model (at its training set).
  double log_marginal_likelihood() const { return lml_; }
  /// Objective (LML) after every accepted optimizer step, one list per start.
  const std::vector<std::vector<double>>& fit_history() const { return history_; }
  int best_start() const { return best_start_; }

  nlohmann::json to_json() const;
  static GpModel from_json(const nlohmann::json& doc);
  void save(const std::filesystem::path& path) const;
  static GpModel load(const std::filesystem::path& path);

 private:
  friend GpModel fit_gp(const Eigen::MatrixXd&, const Eigen::VectorXd&, const GpFitOptions&);
  void refactor();

  Kernel kernel_;
  double noise_ = 0.0;
  double jitter_ = 0.0;
  double y_mean_ = 0.0;
  double lml_ = 0.0;
  Eigen::MatrixXd x_;
  Eigen::MatrixXd x_scaled_;
  Eigen::VectorXd alpha_;
  Eigen::LLT<Eigen::MatrixXd> chol_;
  std::vector<std::vector<double>> history_;
  int best_start_ = -1;
};

/// Maximizes the log marginal likelihood over log-lengthscales, log amplitude
/// and log noise with a bounded L-BFGS from several starts; the best final
/// likelihood wins. Throws FitError when every start fails.
GpModel fit_gp(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const GpFitOptions& opts = {});

}  // namespace ttgp

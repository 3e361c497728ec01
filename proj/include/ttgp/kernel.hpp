#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "ttgp/errors.hpp"

namespace ttgp {

using Index = Eigen::Index;

enum class KernelFamily { Exponential, Matern32, Matern52, RBF };

/// "exp", "matern32", "matern52", "rbf".
std::string to_string(KernelFamily family);
/// Accepts the short names above plus "exponential"; throws ConfigError.
KernelFamily parse_kernel_family(std::string_view name);

/// Stationary kernel amplitude * base(r), where r is the Euclidean distance
/// after dividing each coordinate by its lengthscale. A single lengthscale
/// means isotropic.
///
///   Exponential  exp(-r)
///   Matern32     (1 + sqrt(3) r) exp(-sqrt(3) r)
///   Matern52     (1 + sqrt(5) r + 5 r^2 / 3) exp(-sqrt(5) r)
///   RBF          exp(-r^2 / 2)
struct Kernel {
  KernelFamily family = KernelFamily::RBF;
  std::vector<double> lengthscales{1.0};
  double amplitude = 1.0;

  bool isotropic() const { return lengthscales.size() == 1; }
  double lengthscale(Index dim) const {
    return isotropic() ? lengthscales.front() : lengthscales[static_cast<std::size_t>(dim)];
  }
  /// Throws DomainError on non-positive lengthscales or negative amplitude.
  void validate() const;
};

/// base(r) with unit lengthscale and amplitude.
double kernel_base(KernelFamily family, double r);
/// -base'(r) / r, finite at r = 0 except for the exponential family.
double kernel_radial_slope(KernelFamily family, double r);

double kernel_eval(const Kernel& k, std::span<const double> x, std::span<const double> y);

/// Rows of X divided by the per-dimension lengthscales.
Eigen::MatrixXd scale_inputs(const Kernel& k, const Eigen::MatrixXd& x);

/// K_f + noise * I plus its Cholesky factor. When the plain factorization
/// fails, a diagonal jitter starting at 1e-10 * trace / N is doubled up to
/// 1e-6 * trace / N; past that a ConditioningError is thrown.
struct GramMatrix {
  Eigen::MatrixXd k;
  Eigen::LLT<Eigen::MatrixXd> chol;
  double jitter = 0.0;
};

Eigen::MatrixXd gram(const Kernel& k, const Eigen::MatrixXd& x, double noise);
GramMatrix factorize_gram(const Kernel& k, const Eigen::MatrixXd& x, double noise);
/// Factorizes an already-assembled K_y with the same jitter ladder.
GramMatrix factorize_with_jitter(Eigen::MatrixXd k);

}  // namespace ttgp

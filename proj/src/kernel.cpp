#include "ttgp/kernel.hpp"

#include <cmath>

namespace ttgp {

std::string to_string(KernelFamily family) {
  switch (family) {
    case KernelFamily::Exponential: return "exp";
    case KernelFamily::Matern32: return "matern32";
    case KernelFamily::Matern52: return "matern52";
    case KernelFamily::RBF: return "rbf";
  }
  return "unknown";
}

KernelFamily parse_kernel_family(std::string_view name) {
  if (name == "exp" || name == "exponential") return KernelFamily::Exponential;
  if (name == "matern32") return KernelFamily::Matern32;
  if (name == "matern52") return KernelFamily::Matern52;
  if (name == "rbf") return KernelFamily::RBF;
  throw ConfigError("unknown kernel family '" + std::string(name) +
                    "' (expected exp, matern32, matern52 or rbf)");
}

void Kernel::validate() const {
  if (lengthscales.empty()) throw DomainError("kernel needs at least one lengthscale");
  for (double l : lengthscales) {
    if (!(l > 0) || !std::isfinite(l)) throw DomainError("kernel lengthscales must be positive");
  }
  if (!(amplitude >= 0) || !std::isfinite(amplitude)) {
    throw DomainError("kernel amplitude must be non-negative");
  }
}

double kernel_base(KernelFamily family, double r) {
  static const double s3 = std::sqrt(3.0);
  static const double s5 = std::sqrt(5.0);
  switch (family) {
    case KernelFamily::Exponential: return std::exp(-r);
    case KernelFamily::Matern32: return (1.0 + s3 * r) * std::exp(-s3 * r);
    case KernelFamily::Matern52: return (1.0 + s5 * r + 5.0 * r * r / 3.0) * std::exp(-s5 * r);
    case KernelFamily::RBF: return std::exp(-0.5 * r * r);
  }
  return 0.0;
}

double kernel_radial_slope(KernelFamily family, double r) {
  static const double s3 = std::sqrt(3.0);
  static const double s5 = std::sqrt(5.0);
  switch (family) {
    case KernelFamily::Exponential: return r > 0 ? std::exp(-r) / r : 0.0;
    case KernelFamily::Matern32: return 3.0 * std::exp(-s3 * r);
    case KernelFamily::Matern52: return 5.0 / 3.0 * (1.0 + s5 * r) * std::exp(-s5 * r);
    case KernelFamily::RBF: return std::exp(-0.5 * r * r);
  }
  return 0.0;
}

double kernel_eval(const Kernel& k, std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ShapeError("kernel_eval: point dimensions differ");
  if (!k.isotropic() && k.lengthscales.size() != x.size()) {
    throw ShapeError("kernel_eval: lengthscale count does not match the dimension");
  }
  double r2 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double t = (x[i] - y[i]) / k.lengthscale(static_cast<Index>(i));
    r2 += t * t;
  }
  return k.amplitude * kernel_base(k.family, std::sqrt(r2));
}

Eigen::MatrixXd scale_inputs(const Kernel& k, const Eigen::MatrixXd& x) {
  if (!k.isotropic() && static_cast<Index>(k.lengthscales.size()) != x.cols()) {
    throw ShapeError("lengthscale count does not match the input dimension");
  }
  Eigen::MatrixXd s = x;
  for (Index j = 0; j < x.cols(); ++j) s.col(j) /= k.lengthscale(j);
  return s;
}

Eigen::MatrixXd gram(const Kernel& k, const Eigen::MatrixXd& x, double noise) {
  k.validate();
  if (x.rows() < 1) throw ShapeError("gram needs at least one point");
  const Eigen::MatrixXd s = scale_inputs(k, x);
  const Index n = x.rows();
  Eigen::MatrixXd out(n, n);
  for (Index b = 0; b < n; ++b) {
    out(b, b) = k.amplitude + noise;
    for (Index a = b + 1; a < n; ++a) {
      const double r = (s.row(a) - s.row(b)).norm();
      out(a, b) = out(b, a) = k.amplitude * kernel_base(k.family, r);
    }
  }
  return out;
}

GramMatrix factorize_with_jitter(Eigen::MatrixXd k) {
  GramMatrix g;
  const Index n = k.rows();
  g.chol.compute(k);
  auto ok = [&] {
    return g.chol.info() == Eigen::Success && g.chol.matrixLLT().diagonal().allFinite() &&
           (g.chol.matrixLLT().diagonal().array() > 0).all();
  };
  if (!ok()) {
    const double scale = k.trace() / static_cast<double>(n);
    if (!(scale > 0) || !std::isfinite(scale)) {
      throw ConditioningError("kernel matrix has a non-positive or non-finite trace");
    }
    const double max_jitter = 1e-6 * scale;
    bool done = false;
    for (double jitter = 1e-10 * scale; !done; jitter *= 2.0) {
      if (jitter >= max_jitter) {
        jitter = max_jitter;
        done = true;
      }
      Eigen::MatrixXd kj = k;
      kj.diagonal().array() += jitter;
      g.chol.compute(kj);
      if (ok()) {
        g.jitter = jitter;
        k = std::move(kj);
        break;
      }
      if (done) {
        throw ConditioningError("kernel matrix not positive definite after jitter " +
                                std::to_string(jitter));
      }
    }
  }
  g.k = std::move(k);
  return g;
}

GramMatrix factorize_gram(const Kernel& k, const Eigen::MatrixXd& x, double noise) {
  return factorize_with_jitter(gram(k, x, noise));
}

}  // namespace ttgp

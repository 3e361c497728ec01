#include "ttgp/gp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <string>
#include <tuple>

#include "lbfgs.hpp"
#include "sampling.hpp"

namespace ttgp {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;  // log(2 pi)

}  // namespace

Eigen::VectorXd pack_log_params(const Kernel& k, double noise) {
  const Index l = static_cast<Index>(k.lengthscales.size());
  Eigen::VectorXd theta(l + 2);
  for (Index i = 0; i < l; ++i) theta(i) = std::log(k.lengthscales[static_cast<std::size_t>(i)]);
  theta(l) = std::log(k.amplitude);
  theta(l + 1) = std::log(noise);
  return theta;
}

void unpack_log_params(const Eigen::VectorXd& theta, Kernel& k, double& noise) {
  const Index l = theta.size() - 2;
  k.lengthscales.resize(static_cast<std::size_t>(l));
  for (Index i = 0; i < l; ++i) k.lengthscales[static_cast<std::size_t>(i)] = std::exp(theta(i));
  k.amplitude = std::exp(theta(l));
  noise = std::exp(theta(l + 1));
}

LmlResult log_marginal_likelihood(const Kernel& k, double noise, const Eigen::MatrixXd& x,
                                  const Eigen::VectorXd& y, bool with_gradient) {
  if (x.rows() != y.size()) throw ShapeError("log_marginal_likelihood: X and y sizes differ");
  const Index n = x.rows();
  GramMatrix g = factorize_gram(k, x, noise);
  const Eigen::VectorXd alpha = g.chol.solve(y);
  LmlResult out;
  out.jitter = g.jitter;
  const double logdet = 2.0 * g.chol.matrixLLT().diagonal().array().log().sum();
  out.value = -0.5 * y.dot(alpha) - 0.5 * logdet - 0.5 * static_cast<double>(n) * kLog2Pi;
  if (!with_gradient) return out;

  // dL/dtheta_j = 1/2 tr((alpha alpha^T - K^{-1}) dK/dtheta_j)
  Eigen::MatrixXd w = g.chol.solve(Eigen::MatrixXd::Identity(n, n));
  w = alpha * alpha.transpose() - w;

  const Index l = static_cast<Index>(k.lengthscales.size());
  const Index dim = x.cols();
  out.gradient = Eigen::VectorXd::Zero(l + 2);
  const Eigen::MatrixXd s = scale_inputs(k, x);
  Eigen::VectorXd diff2(dim);
  double amp_term = 0.0;
  for (Index b = 0; b < n; ++b) {
    amp_term += 0.5 * w(b, b) * k.amplitude;
    for (Index a = b + 1; a < n; ++a) {
      diff2 = (s.row(a) - s.row(b)).transpose().array().square();
      const double r = std::sqrt(diff2.sum());
      const double wab = w(a, b);  // counted twice for (a, b) and (b, a)
      amp_term += wab * k.amplitude * kernel_base(k.family, r);
      const double slope = k.amplitude * kernel_radial_slope(k.family, r);
      if (k.isotropic()) {
        out.gradient(0) += wab * slope * diff2.sum();
      } else {
        for (Index i = 0; i < dim; ++i) out.gradient(i) += wab * slope * diff2(i);
      }
    }
  }
  out.gradient(l) = amp_term;
  out.gradient(l + 1) = 0.5 * noise * w.trace();
  return out;
}

// --- GpModel ------------------------------------------------------------------

void GpModel::refactor() {
  Eigen::MatrixXd k = gram(kernel_, x_, noise_);
  k.diagonal().array() += jitter_;
  chol_.compute(k);
  if (chol_.info() != Eigen::Success) {
    throw ConditioningError("stored GP hyperparameters give a non positive definite kernel matrix");
  }
  x_scaled_ = scale_inputs(kernel_, x_);
}

GpModel GpModel::condition(Eigen::MatrixXd x, const Eigen::VectorXd& y, Kernel k, double noise) {
  if (x.rows() != y.size()) throw ShapeError("GP inputs and targets have different lengths");
  if (x.rows() < 1) throw ShapeError("GP needs at least one training point");
  if (!(noise >= 0)) throw DomainError("noise variance must be non-negative");
  k.validate();
  GpModel m;
  m.kernel_ = std::move(k);
  m.noise_ = noise;
  m.x_ = std::move(x);
  m.y_mean_ = y.mean();
  const Eigen::VectorXd yc = y.array() - m.y_mean_;
  GramMatrix g = factorize_gram(m.kernel_, m.x_, noise);
  m.jitter_ = g.jitter;
  m.chol_ = std::move(g.chol);
  m.alpha_ = m.chol_.solve(yc);
  const double logdet = 2.0 * m.chol_.matrixLLT().diagonal().array().log().sum();
  m.lml_ = -0.5 * yc.dot(m.alpha_) - 0.5 * logdet - 0.5 * static_cast<double>(m.x_.rows()) * kLog2Pi;
  m.x_scaled_ = scale_inputs(m.kernel_, m.x_);
  return m;
}

namespace {

// Cross-covariance vector between one scaled query and all scaled inputs.
void cross_covariance(const Kernel& k, const Eigen::MatrixXd& xs, const Eigen::RowVectorXd& qs,
                      Eigen::VectorXd& out) {
  const Index n = xs.rows();
  out.resize(n);
  for (Index i = 0; i < n; ++i) {
    const double r = (xs.row(i) - qs).norm();
    out(i) = k.amplitude * kernel_base(k.family, r);
  }
}

Eigen::RowVectorXd scale_point(const Kernel& k, std::span<const double> p) {
  Eigen::RowVectorXd q(static_cast<Index>(p.size()));
  for (std::size_t j = 0; j < p.size(); ++j) q(static_cast<Index>(j)) = p[j] / k.lengthscale(static_cast<Index>(j));
  return q;
}

}  // namespace

double GpModel::predict_mean(std::span<const double> point) const {
  if (static_cast<Index>(point.size()) != dimension()) throw ShapeError("query point has the wrong dimension");
  Eigen::VectorXd kv;
  cross_covariance(kernel_, x_scaled_, scale_point(kernel_, point), kv);
  return y_mean_ + kv.dot(alpha_);
}

double GpModel::predict_var(std::span<const double> point) const {
  if (static_cast<Index>(point.size()) != dimension()) throw ShapeError("query point has the wrong dimension");
  Eigen::VectorXd kv;
  cross_covariance(kernel_, x_scaled_, scale_point(kernel_, point), kv);
  const Eigen::VectorXd v = chol_.matrixL().solve(kv);
  return std::max(0.0, kernel_.amplitude - v.squaredNorm());
}

Eigen::VectorXd GpModel::predict_mean(const Eigen::MatrixXd& points) const {
  if (points.cols() != dimension()) throw ShapeError("query points have the wrong dimension");
  const Eigen::MatrixXd qs = scale_inputs(kernel_, points);
  Eigen::VectorXd out(points.rows());
  Eigen::VectorXd kv;
  for (Index p = 0; p < points.rows(); ++p) {
    cross_covariance(kernel_, x_scaled_, qs.row(p), kv);
    out(p) = y_mean_ + kv.dot(alpha_);
  }
  return out;
}

Eigen::VectorXd GpModel::predict_var(const Eigen::MatrixXd& points) const {
  if (points.cols() != dimension()) throw ShapeError("query points have the wrong dimension");
  const Eigen::MatrixXd qs = scale_inputs(kernel_, points);
  Eigen::VectorXd out(points.rows());
  Eigen::VectorXd kv;
  for (Index p = 0; p < points.rows(); ++p) {
    cross_covariance(kernel_, x_scaled_, qs.row(p), kv);
    const Eigen::VectorXd v = chol_.matrixL().solve(kv);
    out(p) = std::max(0.0, kernel_.amplitude - v.squaredNorm());
  }
  return out;
}

nlohmann::json GpModel::to_json() const {
  nlohmann::json doc;
  doc["format"] = "ttgp-gp";
  doc["version"] = 1;
  doc["family"] = to_string(kernel_.family);
  doc["lengthscales"] = kernel_.lengthscales;
  doc["amplitude"] = kernel_.amplitude;
  doc["noise"] = noise_;
  doc["jitter"] = jitter_;
  doc["y_mean"] = y_mean_;
  doc["log_marginal_likelihood"] = lml_;
  nlohmann::json rows = nlohmann::json::array();
  for (Index i = 0; i < x_.rows(); ++i) {
    std::vector<double> r(static_cast<std::size_t>(x_.cols()));
    for (Index j = 0; j < x_.cols(); ++j) r[static_cast<std::size_t>(j)] = x_(i, j);
    rows.push_back(std::move(r));
  }
  doc["inputs"] = std::move(rows);
  doc["alpha"] = std::vector<double>(alpha_.data(), alpha_.data() + alpha_.size());
  return doc;
}

GpModel GpModel::from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("format").get<std::string>() != "ttgp-gp") throw ParseError("not a GP model file", 0);
    if (doc.at("version").get<int>() != 1) throw UnsupportedVersionError("unsupported GP model version");
    GpModel m;
    m.kernel_.family = parse_kernel_family(doc.at("family").get<std::string>());
    m.kernel_.lengthscales = doc.at("lengthscales").get<std::vector<double>>();
    m.kernel_.amplitude = doc.at("amplitude").get<double>();
    m.kernel_.validate();
    m.noise_ = doc.at("noise").get<double>();
    m.jitter_ = doc.at("jitter").get<double>();
    m.y_mean_ = doc.at("y_mean").get<double>();
    m.lml_ = doc.at("log_marginal_likelihood").get<double>();
    const auto rows = doc.at("inputs").get<std::vector<std::vector<double>>>();
    const auto alpha = doc.at("alpha").get<std::vector<double>>();
    if (rows.empty() || rows.size() != alpha.size()) throw ParseError("GP inputs and alpha disagree", 0);
    const Index dim = static_cast<Index>(rows.front().size());
    m.x_.resize(static_cast<Index>(rows.size()), dim);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (static_cast<Index>(rows[i].size()) != dim) throw ParseError("ragged GP inputs", i);
      for (Index j = 0; j < dim; ++j) m.x_(static_cast<Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
    }
    m.alpha_ = Eigen::Map<const Eigen::VectorXd>(alpha.data(), static_cast<Index>(alpha.size()));
    m.refactor();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed GP model: ") + e.what(), 0);
  }
}

void GpModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write GP model", path.string());
  out << to_json().dump(1) << "\n";
}

GpModel GpModel::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open GP model", path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed GP model: ") + e.what(), e.byte);
  }
  return from_json(doc);
}

// --- fitting ----------------------------------------------------------------

namespace {

std::pair<Eigen::MatrixXd, Eigen::VectorXd> subsample(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                                      Index count, std::mt19937_64& rng) {
  std::vector<Index> pick = detail::sample_distinct(x.rows(), count, rng);
  std::sort(pick.begin(), pick.end());
  Eigen::MatrixXd xs(count, x.cols());
  Eigen::VectorXd ys(count);
  for (Index i = 0; i < count; ++i) {
    xs.row(i) = x.row(pick[static_cast<std::size_t>(i)]);
    ys(i) = y(pick[static_cast<std::size_t>(i)]);
  }
  return {std::move(xs), std::move(ys)};
}

}  // namespace

GpModel fit_gp(const Eigen::MatrixXd& x_in, const Eigen::VectorXd& y_in, const GpFitOptions& opts) {
  if (x_in.rows() != y_in.size()) throw ShapeError("fit_gp: X and y sizes differ");
  if (x_in.rows() < 2) throw FitError("fit_gp needs at least two observations");
  if (x_in.cols() < 1) throw ShapeError("fit_gp: inputs need at least one dimension");
  if (!x_in.allFinite() || !y_in.allFinite()) throw FitError("fit_gp: non-finite training data");

  std::mt19937_64 rng(opts.seed);
  Eigen::MatrixXd x = x_in;
  Eigen::VectorXd y = y_in;
  if (opts.max_train > 0 && x.rows() > opts.max_train) std::tie(x, y) = subsample(x, y, opts.max_train, rng);

  const Index n = x.rows();
  const Index dim = x.cols();
  const double mean = y.mean();
  const Eigen::VectorXd yc = y.array() - mean;
  const double var = yc.squaredNorm() / static_cast<double>(n);

  const bool aniso = opts.anisotropic.value_or(opts.family == KernelFamily::RBF);
  Eigen::VectorXd span(dim);
  for (Index j = 0; j < dim; ++j) {
    const double s = x.col(j).maxCoeff() - x.col(j).minCoeff();
    span(j) = s > 0 ? s : 1.0;
  }
  const double iso_span = span.maxCoeff();

  Kernel base;
  base.family = opts.family;
  if (!(var > 0)) {
    base.lengthscales.assign(aniso ? static_cast<std::size_t>(dim) : 1u, 1.0);
    for (std::size_t j = 0; aniso && j < base.lengthscales.size(); ++j) base.lengthscales[j] = span(static_cast<Index>(j));
    base.amplitude = 1.0;
    GpModel m = GpModel::condition(std::move(x), y, base, 1e-4);
    m.best_start_ = -1;
    return m;
  }

  Eigen::MatrixXd xh = x;
  Eigen::VectorXd yh = yc;
  const bool subsampled = opts.hyper_max_train > 0 && n > opts.hyper_max_train;
  if (subsampled) {
    std::tie(xh, yh) = subsample(x, yc, opts.hyper_max_train, rng);
    yh.array() -= yh.mean();
  }

  const Index l = aniso ? dim : 1;
  Eigen::VectorXd lo(l + 2);
  Eigen::VectorXd hi(l + 2);
  for (Index i = 0; i < l; ++i) {
    const double s = aniso ? span(i) : iso_span;
    lo(i) = std::log(1e-3 * s);
    hi(i) = std::log(1e3 * s);
  }
  lo(l) = std::log(1e-6 * var);
  hi(l) = std::log(1e6 * var);
  lo(l + 1) = std::log(opts.min_noise_ratio * var);
  hi(l + 1) = std::log(10.0 * var);

  auto objective = [&](const Eigen::VectorXd& theta, Eigen::VectorXd& grad) {
    Kernel k = base;
    double noise = 0.0;
    unpack_log_params(theta, k, noise);
    LmlResult r = log_marginal_likelihood(k, noise, xh, yh, true);
    grad = -r.gradient;
    return -r.value;
  };

  detail::LbfgsOptions lopts;
  lopts.max_iters = opts.max_iters;
  lopts.grad_tol = opts.grad_tol;

  std::vector<std::vector<double>> history;
  double best_value = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_theta;
  int best_start = -1;
  std::string last_error = "no starting points";
  for (std::size_t s = 0; s < opts.start_lengthscales.size(); ++s) {
    Eigen::VectorXd theta0(l + 2);
    for (Index i = 0; i < l; ++i) {
      theta0(i) = std::log(opts.start_lengthscales[s] * (aniso ? span(i) : iso_span));
    }
    theta0(l) = std::log(var);
    theta0(l + 1) = std::log(1e-4 * var);
    try {
      detail::LbfgsResult r = detail::minimize_lbfgs_box(objective, theta0, lo, hi, lopts);
      std::vector<double> lml(r.history.size());
      for (std::size_t i = 0; i < lml.size(); ++i) lml[i] = -r.history[i];
      history.push_back(std::move(lml));
      if (r.value < best_value) {
        best_value = r.value;
        best_theta = r.x;
        best_start = static_cast<int>(s);
      }
    } catch (const std::exception& e) {
      history.emplace_back();
      last_error = e.what();
    }
  }
  if (best_start < 0) throw FitError("every GP optimizer start failed: " + last_error);

  if (subsampled && opts.polish_iters > 0) {
    xh = x;
    yh = yc;
    lopts.max_iters = opts.polish_iters;
    try {
      best_theta = detail::minimize_lbfgs_box(objective, best_theta, lo, hi, lopts).x;
    } catch (const std::exception&) {
      // keep the subsample optimum
    }
  }

  Kernel k = base;
  double noise = 0.0;
  unpack_log_params(best_theta, k, noise);
  GpModel m = GpModel::condition(std::move(x), y, std::move(k), noise);
  m.history_ = std::move(history);
  m.best_start_ = best_start;
  return m;
}

}  // namespace ttgp

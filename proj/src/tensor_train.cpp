#include "ttgp/tensor_train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "linalg.hpp"

namespace ttgp {

MultiIndex MultiIndex::from_zero_based(std::span<const Index> zero_based) {
  std::vector<Index> v(zero_based.begin(), zero_based.end());
  for (auto& i : v) ++i;
  return MultiIndex(std::move(v));
}

std::vector<Index> MultiIndex::zero_based() const {
  std::vector<Index> v(idx_);
  for (auto& i : v) --i;
  return v;
}

void MultiIndex::check(std::span<const Index> mode_sizes) const {
  if (idx_.size() != mode_sizes.size()) {
    throw DomainError("multi-index has " + std::to_string(idx_.size()) +
                      " components, tensor order is " + std::to_string(mode_sizes.size()));
  }
  for (std::size_t k = 0; k < idx_.size(); ++k) {
    if (idx_[k] < 1 || idx_[k] > mode_sizes[k]) {
      throw DomainError("index component " + std::to_string(k + 1) + " = " +
                        std::to_string(idx_[k]) + " outside [1, " +
                        std::to_string(mode_sizes[k]) + "]");
    }
  }
}

// --- Core -----------------------------------------------------------------

Core::Core(Index r_left, Index n, Index r_right)
    : Core(r_left, n, r_right,
           std::vector<double>(static_cast<std::size_t>(r_left * n * r_right), 0.0)) {}

Core::Core(Index r_left, Index n, Index r_right, std::vector<double> data)
    : r_left_(r_left), n_(n), r_right_(r_right), data_(std::move(data)) {
  if (r_left < 1 || n < 1 || r_right < 1) {
    throw ShapeError("core dimensions must be positive");
  }
  if (static_cast<Index>(data_.size()) != r_left * n * r_right) {
    throw ShapeError("core buffer has " + std::to_string(data_.size()) + " values, expected " +
                     std::to_string(r_left * n * r_right));
  }
}

Core Core::from_left_unfolding(const Eigen::MatrixXd& m, Index r_left, Index n) {
  if (m.rows() != r_left * n) throw ShapeError("left unfolding row count mismatch");
  Core c(r_left, n, m.cols());
  c.left_unfolding() = m;
  return c;
}

Core Core::from_right_unfolding(const Eigen::MatrixXd& m, Index n, Index r_right) {
  if (m.cols() != n * r_right) throw ShapeError("right unfolding column count mismatch");
  Core c(m.rows(), n, r_right);
  c.right_unfolding() = m;
  return c;
}

// --- TensorTrain ------------------------------------------------------------

TensorTrain::TensorTrain(std::vector<Core> cores) : cores_(std::move(cores)) {
  if (cores_.empty()) throw ShapeError("a tensor train needs at least one core");
  ranks_.push_back(cores_.front().r_left());
  for (std::size_t k = 0; k < cores_.size(); ++k) {
    if (cores_[k].r_left() != ranks_.back()) {
      throw ShapeError("core " + std::to_string(k + 1) + " has left rank " +
                       std::to_string(cores_[k].r_left()) + " but the previous core ends in " +
                       std::to_string(ranks_.back()));
    }
    modes_.push_back(cores_[k].n());
    ranks_.push_back(cores_[k].r_right());
  }
  if (ranks_.front() != 1 || ranks_.back() != 1) {
    throw ShapeError("boundary ranks must be 1");
  }
}

Index TensorTrain::max_rank() const { return *std::max_element(ranks_.begin(), ranks_.end()); }

Index TensorTrain::parameter_count() const {
  Index total = 0;
  for (const auto& c : cores_) total += c.size();
  return total;
}

// --- DenseTensor ------------------------------------------------------------

double grid_size(std::span<const Index> mode_sizes) {
  double p = 1.0;
  for (Index n : mode_sizes) p *= static_cast<double>(n);
  return p;
}

namespace {

Index checked_numel(const std::vector<Index>& modes, Index cap) {
  for (Index n : modes) {
    if (n < 1) throw ShapeError("mode sizes must be positive");
  }
  const double total = grid_size(modes);
  if (total > static_cast<double>(cap)) {
    throw SizeError("dense tensor with " + std::to_string(total) +
                    " elements exceeds the cap of " + std::to_string(cap));
  }
  return static_cast<Index>(total);
}

}  // namespace

DenseTensor::DenseTensor(std::vector<Index> mode_sizes, Index cap) : modes_(std::move(mode_sizes)) {
  values_.assign(static_cast<std::size_t>(checked_numel(modes_, cap)), 0.0);
}

DenseTensor::DenseTensor(std::vector<Index> mode_sizes, std::vector<double> values, Index cap)
    : modes_(std::move(mode_sizes)), values_(std::move(values)) {
  if (checked_numel(modes_, cap) != static_cast<Index>(values_.size())) {
    throw ShapeError("value count does not match the product of mode sizes");
  }
}

Index DenseTensor::linear_index(std::span<const Index> zero_based) const {
  Index lin = 0;
  Index stride = 1;
  for (std::size_t k = 0; k < modes_.size(); ++k) {
    lin += zero_based[k] * stride;
    stride *= modes_[k];
  }
  return lin;
}

double DenseTensor::at(const MultiIndex& idx) const {
  idx.check(modes_);
  return values_[static_cast<std::size_t>(linear_index(idx.zero_based()))];
}

double& DenseTensor::at(const MultiIndex& idx) {
  idx.check(modes_);
  return values_[static_cast<std::size_t>(linear_index(idx.zero_based()))];
}

Eigen::Map<const Eigen::MatrixXd> DenseTensor::unfolding(Index k) const {
  Index rows = 1;
  for (Index j = 0; j < k; ++j) rows *= modes_[static_cast<std::size_t>(j)];
  return {values_.data(), rows, numel() / rows};
}

double DenseTensor::frobenius_norm() const {
  return Eigen::Map<const Eigen::VectorXd>(values_.data(), numel()).norm();
}

// --- algebra ----------------------------------------------------------------

double tt_eval_unchecked(const TensorTrain& tt, std::span<const Index> zero_based) {
  Eigen::RowVectorXd v = tt.core(0).slice(zero_based[0]);
  for (Index k = 1; k < tt.order(); ++k) {
    v = v * tt.core(k).slice(zero_based[static_cast<std::size_t>(k)]);
  }
  return v(0);
}

double tt_eval(const TensorTrain& tt, const MultiIndex& idx) {
  idx.check(tt.mode_sizes());
  const auto zb = idx.zero_based();
  return tt_eval_unchecked(tt, zb);
}

DenseTensor tt_full(const TensorTrain& tt, Index cap) {
  DenseTensor out(tt.mode_sizes(), cap);
  Eigen::MatrixXd acc = Eigen::MatrixXd::Ones(1, 1);
  for (const auto& core : tt.cores()) {
    Eigen::MatrixXd next = acc * core.right_unfolding();
    // (rows x n*r) column-major is bitwise the (rows*n x r) matrix we need.
    acc = Eigen::Map<Eigen::MatrixXd>(next.data(), acc.rows() * core.n(), core.r_right());
  }
  std::copy(acc.data(), acc.data() + acc.size(), out.values().begin());
  return out;
}

namespace {

TensorTrain zero_tt(std::span<const Index> modes) {
  std::vector<Core> cores;
  for (Index n : modes) cores.emplace_back(1, n, 1);
  return TensorTrain(std::move(cores));
}

double per_step_threshold(double tol, double norm, Index d) {
  return tol * norm / std::sqrt(static_cast<double>(std::max<Index>(1, d - 1)));
}

}  // namespace

TensorTrain tt_from_dense(const DenseTensor& x, double tol) {
  if (!(tol >= 0)) throw DomainError("tolerance must be non-negative");
  const auto& modes = x.mode_sizes();
  const Index d = x.order();
  const double norm = x.frobenius_norm();
  if (norm == 0.0) return zero_tt(modes);
  const double delta = per_step_threshold(tol, norm, d);

  std::vector<Core> cores;
  Eigen::MatrixXd rest = Eigen::Map<const Eigen::VectorXd>(x.values().data(), x.numel());
  Index r_prev = 1;
  for (Index k = 0; k + 1 < d; ++k) {
    const Index n = modes[static_cast<std::size_t>(k)];
    const Index rows = r_prev * n;
    Eigen::Map<const Eigen::MatrixXd> c(rest.data(), rows, rest.size() / rows);
    detail::TruncatedSvd svd = detail::truncated_svd(c, delta);
    cores.push_back(Core::from_left_unfolding(svd.u, r_prev, n));
    Eigen::MatrixXd carry = svd.s.asDiagonal() * svd.v.transpose();
    rest = std::move(carry);
    r_prev = svd.s.size();
  }
  cores.push_back(Core::from_left_unfolding(
      Eigen::Map<const Eigen::MatrixXd>(rest.data(), rest.size(), 1), r_prev,
      modes.back()));
  return TensorTrain(std::move(cores));
}

TensorTrain tt_orthogonalize_right(const TensorTrain& tt) {
  std::vector<Core> cores = tt.cores();
  for (Index k = tt.order() - 1; k > 0; --k) {
    auto& core = cores[static_cast<std::size_t>(k)];
    auto& prev = cores[static_cast<std::size_t>(k - 1)];
    detail::ThinQr qr = detail::thin_qr(core.right_unfolding().transpose());
    core = Core::from_right_unfolding(qr.q.transpose(), core.n(), core.r_right());
    prev = Core::from_left_unfolding(prev.left_unfolding() * qr.r.transpose(), prev.r_left(),
                                     prev.n());
  }
  return TensorTrain(std::move(cores));
}

TensorTrain tt_orthogonalize_left(const TensorTrain& tt) {
  std::vector<Core> cores = tt.cores();
  for (Index k = 0; k + 1 < tt.order(); ++k) {
    auto& core = cores[static_cast<std::size_t>(k)];
    auto& next = cores[static_cast<std::size_t>(k + 1)];
    detail::ThinQr qr = detail::thin_qr(core.left_unfolding());
    core = Core::from_left_unfolding(qr.q, core.r_left(), core.n());
    next = Core::from_right_unfolding(qr.r * next.right_unfolding(), next.n(), next.r_right());
  }
  return TensorTrain(std::move(cores));
}

TensorTrain tt_round(const TensorTrain& tt, double tol) {
  if (!(tol >= 0)) throw DomainError("tolerance must be non-negative");
  const Index d = tt.order();
  if (d == 1) return tt;
  TensorTrain orth = tt_orthogonalize_right(tt);
  std::vector<Core> cores = orth.cores();
  const double norm = Eigen::Map<const Eigen::VectorXd>(cores[0].data().data(), cores[0].size()).norm();
  if (norm == 0.0) return zero_tt(tt.mode_sizes());
  const double delta = per_step_threshold(tol, norm, d);
  for (Index k = 0; k + 1 < d; ++k) {
    auto& core = cores[static_cast<std::size_t>(k)];
    auto& next = cores[static_cast<std::size_t>(k + 1)];
    detail::TruncatedSvd svd = detail::truncated_svd(core.left_unfolding(), delta);
    core = Core::from_left_unfolding(svd.u, core.r_left(), core.n());
    Eigen::MatrixXd carry = svd.s.asDiagonal() * svd.v.transpose();
    next = Core::from_right_unfolding(carry * next.right_unfolding(), next.n(), next.r_right());
  }
  return TensorTrain(std::move(cores));
}

double tt_dot(const TensorTrain& a, const TensorTrain& b) {
  if (a.mode_sizes() != b.mode_sizes()) throw ShapeError("tt_dot: mode sizes differ");
  Eigen::MatrixXd w = Eigen::MatrixXd::Ones(1, 1);
  for (Index k = 0; k < a.order(); ++k) {
    const Core& ca = a.core(k);
    const Core& cb = b.core(k);
    Eigen::MatrixXd next = Eigen::MatrixXd::Zero(ca.r_right(), cb.r_right());
    for (Index i = 0; i < ca.n(); ++i) {
      next.noalias() += ca.slice(i).transpose() * (w * cb.slice(i));
    }
    w = std::move(next);
  }
  return w(0, 0);
}

double tt_norm(const TensorTrain& tt) { return std::sqrt(std::max(0.0, tt_dot(tt, tt))); }

TensorTrain tt_scale(const TensorTrain& tt, double alpha) {
  std::vector<Core> cores = tt.cores();
  for (double& v : cores[0].data()) v *= alpha;
  return TensorTrain(std::move(cores));
}

namespace {

void check_rank_chain(std::span<const Index> modes, std::span<const Index> ranks) {
  if (modes.empty()) throw ShapeError("tensor order must be at least 1");
  if (ranks.size() != modes.size() + 1) {
    throw ShapeError("rank vector must have d + 1 entries");
  }
  if (ranks.front() != 1 || ranks.back() != 1) throw ShapeError("boundary ranks must be 1");
  for (Index r : ranks) {
    if (r < 1) throw ShapeError("ranks must be positive");
  }
  for (Index n : modes) {
    if (n < 1) throw ShapeError("mode sizes must be positive");
  }
}

}  // namespace

TensorTrain tt_random(std::span<const Index> mode_sizes, std::span<const Index> ranks,
                      std::uint64_t seed) {
  check_rank_chain(mode_sizes, ranks);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Core> cores;
  for (std::size_t k = 0; k < mode_sizes.size(); ++k) {
    Core c(ranks[k], mode_sizes[k], ranks[k + 1]);
    for (double& v : c.data()) v = normal(rng);
    cores.push_back(std::move(c));
  }
  return TensorTrain(std::move(cores));
}

TensorTrain tt_constant(std::span<const Index> mode_sizes, double value) {
  std::vector<Core> cores;
  for (std::size_t k = 0; k < mode_sizes.size(); ++k) {
    Core c(1, mode_sizes[k], 1);
    std::fill(c.data().begin(), c.data().end(), k == 0 ? value : 1.0);
    cores.push_back(std::move(c));
  }
  return TensorTrain(std::move(cores));
}

std::vector<Index> feasible_ranks(std::span<const Index> mode_sizes, std::span<const Index> ranks) {
  check_rank_chain(mode_sizes, ranks);
  std::vector<Index> r(ranks.begin(), ranks.end());
  const std::size_t d = mode_sizes.size();
  for (std::size_t k = 1; k < d; ++k) r[k] = std::min(r[k], r[k - 1] * mode_sizes[k - 1]);
  for (std::size_t k = d - 1; k >= 1; --k) r[k] = std::min(r[k], r[k + 1] * mode_sizes[k]);
  return r;
}

std::vector<Index> feasible_ranks(std::span<const Index> mode_sizes, Index rank) {
  if (rank < 1) throw ShapeError("ranks must be positive");
  std::vector<Index> r(mode_sizes.size() + 1, rank);
  r.front() = 1;
  r.back() = 1;
  return feasible_ranks(mode_sizes, r);
}

}  // namespace ttgp

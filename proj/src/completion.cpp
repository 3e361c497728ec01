#include "ttgp/completion.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <random>

#include "sampling.hpp"

namespace ttgp {

std::string to_string(CompletionMethod m) { return m == CompletionMethod::ALS ? "als" : "sgd"; }

CompletionMethod parse_completion_method(std::string_view name) {
  if (name == "als") return CompletionMethod::ALS;
  if (name == "sgd") return CompletionMethod::SGD;
  throw ConfigError("unknown completion method '" + std::string(name) + "' (expected als or sgd)");
}

std::string to_string(RidgeAnchor a) { return a == RidgeAnchor::Zero ? "zero" : "previous"; }

RidgeAnchor parse_ridge_anchor(std::string_view name) {
  if (name == "zero") return RidgeAnchor::Zero;
  if (name == "previous") return RidgeAnchor::Previous;
  throw ConfigError("unknown ridge anchor '" + std::string(name) + "' (expected zero or previous)");
}

namespace {

void check_shapes(const TensorTrain& tt, const ObservationSet& obs) {
  if (tt.mode_sizes() != obs.mode_sizes()) throw ShapeError("tensor and observations have different mode sizes");
}

// Column j of level k holds the interface of observation rows[j]:
//   left[k]   = G_1[i_1] ... G_k[i_k]          (r_k entries)
//   right[k]  = G_{k+1}[i_{k+1}] ... G_d[i_d]  (r_k entries)
using Levels = std::vector<Eigen::MatrixXd>;

void push_left(const TensorTrain& tt, const ObservationSet& obs, std::span<const Index> rows, Index k,
               Levels& left) {
  const Core& c = tt.core(k);
  Eigen::MatrixXd& out = left[static_cast<std::size_t>(k + 1)];
  const Eigen::MatrixXd& in = left[static_cast<std::size_t>(k)];
  out.resize(c.r_right(), static_cast<Index>(rows.size()));
  for (std::size_t j = 0; j < rows.size(); ++j) {
    const Index i = obs.zero_based(rows[j])[static_cast<std::size_t>(k)];
    out.col(static_cast<Index>(j)).noalias() = c.slice(i).transpose() * in.col(static_cast<Index>(j));
  }
}

void push_right(const TensorTrain& tt, const ObservationSet& obs, std::span<const Index> rows, Index k,
                Levels& right) {
  const Core& c = tt.core(k);
  Eigen::MatrixXd& out = right[static_cast<std::size_t>(k)];
  const Eigen::MatrixXd& in = right[static_cast<std::size_t>(k + 1)];
  out.resize(c.r_left(), static_cast<Index>(rows.size()));
  for (std::size_t j = 0; j < rows.size(); ++j) {
    const Index i = obs.zero_based(rows[j])[static_cast<std::size_t>(k)];
    out.col(static_cast<Index>(j)).noalias() = c.slice(i) * in.col(static_cast<Index>(j));
  }
}

Levels init_levels(Index d, Index count) {
  Levels lv(static_cast<std::size_t>(d + 1));
  lv.front() = Eigen::MatrixXd::Ones(1, count);
  lv.back() = Eigen::MatrixXd::Ones(1, count);
  return lv;
}

std::vector<Index> all_rows(const ObservationSet& obs) {
  std::vector<Index> rows(static_cast<std::size_t>(obs.size()));
  for (Index r = 0; r < obs.size(); ++r) rows[static_cast<std::size_t>(r)] = r;
  return rows;
}

double sse_from(const Eigen::MatrixXd& pred, const ObservationSet& obs) {
  return (pred.row(0).transpose() - obs.values()).squaredNorm();
}

}  // namespace

double objective(const TensorTrain& tt, const ObservationSet& obs) {
  check_shapes(tt, obs);
  double sse = 0.0;
  for (Index r = 0; r < obs.size(); ++r) {
    const double e = tt_eval_unchecked(tt, obs.zero_based(r)) - obs.value(r);
    sse += e * e;
  }
  return sse;
}

std::vector<Core> grad_cores(const TensorTrain& tt, const ObservationSet& obs, std::span<const Index> batch) {
  check_shapes(tt, obs);
  if (batch.empty()) throw DomainError("gradient batch must not be empty");
  for (Index r : batch) {
    if (r < 0 || r >= obs.size()) throw DomainError("gradient batch row out of range");
  }
  const Index d = tt.order();
  const Index m = static_cast<Index>(batch.size());
  Levels left = init_levels(d, m);
  Levels right = init_levels(d, m);
  for (Index k = 0; k + 1 < d; ++k) push_left(tt, obs, batch, k, left);
  for (Index k = d - 1; k > 0; --k) push_right(tt, obs, batch, k, right);

  Eigen::VectorXd resid(m);
  {
    const Core& c = tt.core(d - 1);
    for (Index j = 0; j < m; ++j) {
      const Index i = obs.zero_based(batch[static_cast<std::size_t>(j)])[static_cast<std::size_t>(d - 1)];
      const double v = (left[static_cast<std::size_t>(d - 1)].col(j).transpose() * c.slice(i)).value();
      resid(j) = 2.0 * (v - obs.value(batch[static_cast<std::size_t>(j)]));
    }
  }

  std::vector<Core> grads;
  grads.reserve(static_cast<std::size_t>(d));
  for (Index k = 0; k < d; ++k) {
    const Core& c = tt.core(k);
    Core g(c.r_left(), c.n(), c.r_right());
    for (Index j = 0; j < m; ++j) {
      const Index i = obs.zero_based(batch[static_cast<std::size_t>(j)])[static_cast<std::size_t>(k)];
      g.slice(i).noalias() += resid(j) * left[static_cast<std::size_t>(k)].col(j) *
                              right[static_cast<std::size_t>(k + 1)].col(j).transpose();
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

std::vector<Core> grad_cores(const TensorTrain& tt, const ObservationSet& obs) {
  const std::vector<Index> rows = all_rows(obs);
  return grad_cores(tt, obs, rows);
}

namespace {

// Solves min ||A s - y||^2 + lambda ||s - s0||^2 for one core slice, in the
// primal (p x p) or dual (m x m) form, whichever is smaller.
Eigen::VectorXd ridge_solve(const Eigen::MatrixXd& a, const Eigen::VectorXd& y, const Eigen::VectorXd& s0,
                            double lambda) {
  const Index m = a.rows();
  const Index p = a.cols();
  const double trace = a.squaredNorm();
  if (trace == 0.0) return s0;
  const double lam = std::max(lambda, 1e-12 * trace / static_cast<double>(std::min(m, p)));
  if (m >= p) {
    Eigen::MatrixXd g = a.transpose() * a;
    g.diagonal().array() += lam;
    const Eigen::VectorXd rhs = a.transpose() * y + lam * s0;
    Eigen::LLT<Eigen::MatrixXd> llt(g);
    if (llt.info() == Eigen::Success) return llt.solve(rhs);
    return g.ldlt().solve(rhs);
  }
  Eigen::MatrixXd k = a * a.transpose();
  k.diagonal().array() += lam;
  const Eigen::VectorXd r = y - a * s0;
  Eigen::LLT<Eigen::MatrixXd> llt(k);
  const Eigen::VectorXd c = llt.info() == Eigen::Success ? Eigen::VectorXd(llt.solve(r)) : Eigen::VectorXd(k.ldlt().solve(r));
  return s0 + a.transpose() * c;
}

void update_core(TensorTrain& tt, const ObservationSet& obs, const std::vector<std::vector<Index>>& buckets,
                 Index k, const Eigen::MatrixXd& left, const Eigen::MatrixXd& right, double lambda,
                 RidgeAnchor anchor) {
  const Index rl = tt.core(k).r_left();
  const Index rr = tt.core(k).r_right();
  const Index p = rl * rr;
  const std::vector<Index>& mine = buckets[static_cast<std::size_t>(k)];
  const Index n = tt.core(k).n();
  // mine is a flat list of (slice, row) pairs grouped by slice
  std::size_t pos = 0;
  for (Index i = 0; i < n; ++i) {
    std::size_t end = pos;
    while (end < mine.size() && mine[end] == i) end += 2;
    const Index m = static_cast<Index>((end - pos) / 2);
    if (m == 0) continue;
    Eigen::MatrixXd a(m, p);
    Eigen::VectorXd y(m);
    for (Index j = 0; j < m; ++j) {
      const Index r = mine[pos + 2 * static_cast<std::size_t>(j) + 1];
      for (Index b = 0; b < rr; ++b) {
        a.row(j).segment(b * rl, rl) = right(b, r) * left.col(r).transpose();
      }
      y(j) = obs.value(r);
    }
    auto slice = tt.core_slice(k, i);
    Eigen::VectorXd s0(p);
    if (anchor == RidgeAnchor::Previous) {
      for (Index b = 0; b < rr; ++b) s0.segment(b * rl, rl) = slice.col(b);
    } else {
      s0.setZero();
    }
    const Eigen::VectorXd s = ridge_solve(a, y, s0, lambda);
    for (Index b = 0; b < rr; ++b) slice.col(b) = s.segment(b * rl, rl);
    pos = end;
  }
}

}  // namespace

TensorTrain als_sweep(const TensorTrain& tt_in, const ObservationSet& obs, double lambda, RidgeAnchor anchor,
                      std::vector<double>* half_sweeps) {
  check_shapes(tt_in, obs);
  if (!(lambda >= 0)) throw DomainError("ridge weight must be non-negative");
  TensorTrain tt = tt_in;
  const Index d = tt.order();
  const Index count = obs.size();
  if (count == 0) {
    if (half_sweeps) half_sweeps->insert(half_sweeps->end(), {0.0, 0.0});
    return tt;
  }
  const std::vector<Index> rows = all_rows(obs);

  // Per core: (slice, row) pairs sorted by slice.
  std::vector<std::vector<Index>> buckets(static_cast<std::size_t>(d));
  for (Index k = 0; k < d; ++k) {
    std::vector<std::vector<Index>> per(static_cast<std::size_t>(tt.core(k).n()));
    for (Index r = 0; r < count; ++r) per[static_cast<std::size_t>(obs.zero_based(r)[static_cast<std::size_t>(k)])].push_back(r);
    auto& flat = buckets[static_cast<std::size_t>(k)];
    for (std::size_t i = 0; i < per.size(); ++i) {
      for (Index r : per[i]) {
        flat.push_back(static_cast<Index>(i));
        flat.push_back(r);
      }
    }
  }

  Levels left = init_levels(d, count);
  Levels right = init_levels(d, count);
  for (Index k = d - 1; k > 0; --k) push_right(tt, obs, rows, k, right);

  for (Index k = 0; k < d; ++k) {
    update_core(tt, obs, buckets, k, left[static_cast<std::size_t>(k)], right[static_cast<std::size_t>(k + 1)],
                lambda, anchor);
    push_left(tt, obs, rows, k, left);
  }
  if (half_sweeps) half_sweeps->push_back(sse_from(left.back(), obs));

  push_right(tt, obs, rows, d - 1, right);
  for (Index k = d - 2; k >= 0; --k) {
    update_core(tt, obs, buckets, k, left[static_cast<std::size_t>(k)], right[static_cast<std::size_t>(k + 1)],
                lambda, anchor);
    push_right(tt, obs, rows, k, right);
  }
  if (half_sweeps) half_sweeps->push_back(sse_from(right.front(), obs));
  return tt;
}

CompletionTrace complete(const TensorTrain& tt0, const ObservationSet& obs, const CompletionOptions& opts) {
  check_shapes(tt0, obs);
  if (opts.n_iters < 0) throw ConfigError("iteration count must be non-negative");
  if (opts.trace_every < 1) throw ConfigError("trace_every must be positive");
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(Clock::now() - start).count(); };

  CompletionTrace trace;
  trace.tt = tt0;
  auto record = [&](int it, double f) {
    if (!std::isfinite(f)) throw DivergenceError("objective is not finite at iteration " + std::to_string(it), it);
    trace.iters.push_back(it);
    trace.objective.push_back(f);
    trace.seconds.push_back(elapsed());
  };
  record(0, objective(trace.tt, obs));

  if (opts.method == CompletionMethod::ALS) {
    double lambda = 0.0;
    if (opts.als_ridge) {
      lambda = *opts.als_ridge;
    } else if (obs.size() > 0) {
      const Eigen::VectorXd& y = obs.values();
      lambda = 1e-10 * (y.array() - y.mean()).square().mean();
    }
    if (!(lambda >= 0)) throw ConfigError("ridge weight must be non-negative");
    std::vector<double> halves;
    for (int it = 1; it <= opts.n_iters; ++it) {
      halves.clear();
      trace.tt = als_sweep(trace.tt, obs, lambda, opts.anchor, &halves);
      if (!std::isfinite(halves.back())) {
        throw DivergenceError("objective is not finite at iteration " + std::to_string(it), it);
      }
      if (it % opts.trace_every == 0 || it == opts.n_iters) record(it, halves.back());
    }
    return trace;
  }

  if (opts.sgd_batch < 1) throw ConfigError("SGD batch size must be positive");
  if (opts.sgd_decay < 0) throw ConfigError("SGD decay must be non-negative");
  const double lr0 = opts.sgd_lr.value_or(1e-2 / std::sqrt(static_cast<double>(tt0.max_rank())));
  if (!(lr0 >= 0)) throw ConfigError("SGD learning rate must be non-negative");
  if (obs.size() == 0) return trace;
  std::mt19937_64 rng(opts.seed);
  const Index batch = std::min(opts.sgd_batch, obs.size());
  for (int it = 1; it <= opts.n_iters; ++it) {
    const std::vector<Index> rows = detail::sample_distinct(obs.size(), batch, rng);
    const std::vector<Core> g = grad_cores(trace.tt, obs, rows);
    const double lr = lr0 / (1.0 + opts.sgd_decay * static_cast<double>(it - 1)) / static_cast<double>(batch);
    if (lr != 0.0) {
      for (Index k = 0; k < trace.tt.order(); ++k) {
        std::span<double> v = trace.tt.core_values(k);
        std::span<const double> gv = g[static_cast<std::size_t>(k)].data();
        for (std::size_t e = 0; e < v.size(); ++e) v[e] -= lr * gv[e];
      }
    }
    if (it % opts.trace_every == 0 || it == opts.n_iters) record(it, objective(trace.tt, obs));
  }
  return trace;
}

void write_trace_csv(const CompletionTrace& trace, const std::filesystem::path& path, bool with_seconds) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write trace", path.string());
  out << "iter,objective,seconds\n";
  out.precision(17);
  for (std::size_t i = 0; i < trace.iters.size(); ++i) {
    out << trace.iters[i] << "," << trace.objective[i] << ",";
    if (with_seconds) out << trace.seconds[i];
    out << "\n";
  }
}

}  // namespace ttgp

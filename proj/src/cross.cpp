#include "ttgp/cross.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>

#include "linalg.hpp"
#include "ttgp/maxvol.hpp"

namespace ttgp {

// --- BlackBox ---------------------------------------------------------------

namespace {

std::string format_index(std::span<const Index> one_based) {
  std::ostringstream os;
  os << '(';
  for (std::size_t k = 0; k < one_based.size(); ++k) os << (k ? ", " : "") << one_based[k];
  os << ')';
  return os.str();
}

}  // namespace

BlackBox::BlackBox(Index order, BatchFn fn) : order_(order), fn_(std::move(fn)) {
  if (order < 1) throw DomainError("black box order must be at least 1");
}

BlackBox BlackBox::pointwise(Index order, PointFn fn) {
  return BlackBox(order, [order, fn = std::move(fn)](std::span<const Index> indices, Index count,
                                                     std::span<double> out) {
    for (Index p = 0; p < count; ++p) {
      const auto row = indices.subspan(static_cast<std::size_t>(p * order), static_cast<std::size_t>(order));
      MultiIndex idx(std::vector<Index>(row.begin(), row.end()));
      try {
        out[static_cast<std::size_t>(p)] = fn(idx);
      } catch (const EvaluationError&) {
        throw;
      } catch (const std::exception& e) {
        throw EvaluationError("black box failed at index " + format_index(row) + ": " + e.what());
      }
    }
  });
}

void BlackBox::evaluate(std::span<const Index> indices, Index count, std::span<double> out) {
  if (count == 0) return;
  try {
    fn_(indices, count, out);
  } catch (const EvaluationError&) {
    throw;
  } catch (const std::exception& e) {
    throw EvaluationError("black box failed on a batch starting at index " +
                          format_index(indices.first(static_cast<std::size_t>(order_))) + ": " +
                          e.what());
  }
  evaluations_ += static_cast<std::uint64_t>(count);
  for (Index p = 0; p < count; ++p) {
    if (!std::isfinite(out[static_cast<std::size_t>(p)])) {
      throw EvaluationError("black box returned a non-finite value at index " +
                            format_index(indices.subspan(static_cast<std::size_t>(p * order_),
                                                         static_cast<std::size_t>(order_))));
    }
  }
}

double BlackBox::operator()(const MultiIndex& idx) {
  if (static_cast<Index>(idx.size()) != order_) throw DomainError("black box index has wrong order");
  double v = 0.0;
  evaluate(idx.values(), 1, std::span(&v, 1));
  return v;
}

// --- cross engine -------------------------------------------------------------

namespace {

using Prefix = std::vector<Index>;  // 0-based partial multi-index

struct VectorHash {
  std::size_t operator()(const std::vector<Index>& v) const noexcept {
    std::size_t h = 1469598103934665603ull;
    for (Index x : v) {
      h ^= static_cast<std::size_t>(x) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    }
    return h;
  }
};

using EvalCache = std::unordered_map<std::vector<Index>, double, VectorHash>;

class CrossEngine {
 public:
  CrossEngine(BlackBox& f, std::span<const Index> modes, const CrossOptions& opts, EvalCache& cache)
      : f_(f), modes_(modes.begin(), modes.end()), d_(static_cast<Index>(modes.size())),
        opts_(opts), cache_(cache), rng_(opts.seed) {}

  CrossReport run(std::span<const Index> requested) {
    const std::uint64_t evals_before = f_.evaluations();
    ranks_ = feasible_ranks(modes_, requested);
    CrossReport report;
    cores_.assign(static_cast<std::size_t>(d_), Core());
    left_.assign(static_cast<std::size_t>(d_ + 1), {});
    right_.assign(static_cast<std::size_t>(d_ + 1), {});
    left_[0] = {Prefix{}};
    right_[static_cast<std::size_t>(d_)] = {Prefix{}};
    for (Index b = 1; b < d_; ++b) right_[static_cast<std::size_t>(b)] = random_suffixes(b, rank(b));

    const int sweeps = std::max(1, opts_.sweeps);
    for (int s = 0; s < sweeps; ++s) {
      forward(s == 0);
      backward();
    }

    report.tt = TensorTrain(cores_);
    report.final_ranks = report.tt.ranks();
    report.evals = f_.evaluations() - evals_before;
    report.sweeps_used = sweeps;
    report.rank_reduced = rank_reduced_;
    report.left = to_one_based(left_);
    report.right = to_one_based(right_);
    return report;
  }

 private:
  Index rank(Index b) const { return ranks_[static_cast<std::size_t>(b)]; }
  Index mode(Index k) const { return modes_[static_cast<std::size_t>(k)]; }
  std::vector<Prefix>& left(Index b) { return left_[static_cast<std::size_t>(b)]; }
  std::vector<Prefix>& right(Index b) { return right_[static_cast<std::size_t>(b)]; }

  std::vector<Prefix> random_suffixes(Index b, Index count) {
    std::set<Prefix> seen;
    std::vector<Prefix> out;
    while (static_cast<Index>(out.size()) < count) {
      Prefix s;
      for (Index k = b; k < d_; ++k) {
        std::uniform_int_distribution<Index> pick(0, mode(k) - 1);
        s.push_back(pick(rng_));
      }
      if (seen.insert(s).second) out.push_back(std::move(s));
    }
    return out;
  }

  // F(a, i, b) = f(left_b[a], i, right_{k+1}[b]) for core position k.
  Core fiber(Index k, const std::vector<Prefix>& lset, const std::vector<Prefix>& rset) {
    const Index rl = static_cast<Index>(lset.size());
    const Index n = mode(k);
    const Index rr = static_cast<Index>(rset.size());
    Core out(rl, n, rr);
    std::vector<Index> missing_flat;
    std::vector<std::vector<Index>> missing_keys;
    std::vector<Index> missing_pos;
    std::vector<Index> full;
    full.reserve(static_cast<std::size_t>(d_));
    for (Index b = 0; b < rr; ++b) {
      for (Index i = 0; i < n; ++i) {
        for (Index a = 0; a < rl; ++a) {
          full.assign(lset[static_cast<std::size_t>(a)].begin(), lset[static_cast<std::size_t>(a)].end());
          full.push_back(i);
          full.insert(full.end(), rset[static_cast<std::size_t>(b)].begin(),
                      rset[static_cast<std::size_t>(b)].end());
          const Index pos = a + rl * (i + n * b);
          if (auto it = cache_.find(full); it != cache_.end()) {
            out.data()[static_cast<std::size_t>(pos)] = it->second;
          } else {
            for (Index v : full) missing_flat.push_back(v + 1);
            missing_keys.push_back(full);
            missing_pos.push_back(pos);
          }
        }
      }
    }
    if (!missing_keys.empty()) {
      std::vector<double> values(missing_keys.size());
      f_.evaluate(missing_flat, static_cast<Index>(missing_keys.size()), values);
      for (std::size_t p = 0; p < missing_keys.size(); ++p) {
        out.data()[static_cast<std::size_t>(missing_pos[p])] = values[p];
        cache_.emplace(std::move(missing_keys[p]), values[p]);
      }
    }
    return out;
  }

  struct Basis {
    Eigen::MatrixXd q;
    Index numerical_rank = 0;
  };

  static Basis column_basis(const Eigen::MatrixXd& m) {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU);
    Basis out;
    out.numerical_rank = detail::numerical_rank(svd.singularValues(), kRankTolerance);
    const Index keep = std::max<Index>(1, out.numerical_rank);
    out.q = svd.matrixU().leftCols(keep);
    return out;
  }

  void forward(bool allow_resample) {
    for (Index k = 0; k + 1 < d_; ++k) {
      const Index rl = rank(k);
      const Index n = mode(k);
      const Index target = rank(k + 1);
      Core f = fiber(k, left(k), right(k + 1));
      Basis basis = column_basis(f.left_unfolding());
      for (int t = 0; allow_resample && basis.numerical_rank < target && t < opts_.max_resample; ++t) {
        auto candidate = random_suffixes(k + 1, target);
        Core g = fiber(k, left(k), candidate);
        Basis gb = column_basis(g.left_unfolding());
        if (gb.numerical_rank > basis.numerical_rank) {
          basis = std::move(gb);
          right(k + 1) = std::move(candidate);
        }
      }
      if (basis.numerical_rank < target) rank_reduced_ = true;
      const Index r_new = basis.q.cols();
      MaxvolResult mv = maxvol(basis.q, opts_.maxvol_delta, opts_.maxvol_iters);
      cores_[static_cast<std::size_t>(k)] = Core::from_left_unfolding(mv.coeffs, rl, n);
      std::vector<Prefix> next;
      next.reserve(static_cast<std::size_t>(r_new));
      for (Index row : mv.rows) {
        Prefix p = left(k)[static_cast<std::size_t>(row % rl)];
        p.push_back(row / rl);
        next.push_back(std::move(p));
      }
      left(k + 1) = std::move(next);
      ranks_[static_cast<std::size_t>(k + 1)] = r_new;
    }
    cores_.back() = fiber(d_ - 1, left(d_ - 1), right(d_));
  }

  void backward() {
    for (Index k = d_ - 1; k > 0; --k) {
      const Index n = mode(k);
      const Index rr = rank(k + 1);
      const Index target = rank(k);
      Core f = fiber(k, left(k), right(k + 1));
      Basis basis = column_basis(f.right_unfolding().transpose());
      if (basis.numerical_rank < target) rank_reduced_ = true;
      const Index r_new = basis.q.cols();
      MaxvolResult mv = maxvol(basis.q, opts_.maxvol_delta, opts_.maxvol_iters);
      cores_[static_cast<std::size_t>(k)] =
          Core::from_right_unfolding(mv.coeffs.transpose(), n, rr);
      std::vector<Prefix> next;
      next.reserve(static_cast<std::size_t>(r_new));
      for (Index row : mv.rows) {
        Prefix s{row % n};
        const auto& tail = right(k + 1)[static_cast<std::size_t>(row / n)];
        s.insert(s.end(), tail.begin(), tail.end());
        next.push_back(std::move(s));
      }
      right(k) = std::move(next);
      ranks_[static_cast<std::size_t>(k)] = r_new;
    }
    cores_.front() = fiber(0, left(0), right(1));
  }

  static IndexSets to_one_based(const std::vector<std::vector<Prefix>>& sets) {
    IndexSets out;
    for (const auto& set : sets) {
      auto& o = out.emplace_back();
      for (const auto& p : set) {
        auto& q = o.emplace_back(p);
        for (auto& v : q) ++v;
      }
    }
    return out;
  }

  BlackBox& f_;
  std::vector<Index> modes_;
  Index d_;
  CrossOptions opts_;
  EvalCache& cache_;
  std::mt19937_64 rng_;
  std::vector<Index> ranks_;
  std::vector<Core> cores_;
  std::vector<std::vector<Prefix>> left_;
  std::vector<std::vector<Prefix>> right_;
  bool rank_reduced_ = false;
};

void check_black_box(const BlackBox& f, std::span<const Index> modes) {
  if (f.order() != static_cast<Index>(modes.size())) {
    throw ShapeError("black box order does not match the number of modes");
  }
}

}  // namespace

CrossReport tt_cross(BlackBox& f, std::span<const Index> mode_sizes, std::span<const Index> ranks,
                     const CrossOptions& opts) {
  check_black_box(f, mode_sizes);
  EvalCache cache;
  CrossEngine engine(f, mode_sizes, opts, cache);
  CrossReport report = engine.run(ranks);
  report.working_ranks = {*std::max_element(ranks.begin(), ranks.end())};
  return report;
}

CrossReport tt_cross_adaptive(BlackBox& f, std::span<const Index> mode_sizes,
                              const AdaptiveCrossOptions& opts) {
  check_black_box(f, mode_sizes);
  if (opts.r0 < 1 || opts.r_max < opts.r0) throw DomainError("need 1 <= r0 <= r_max");
  if (!(opts.round_tol > 0)) throw DomainError("round_tol must be positive");
  if (!(opts.growth > 1)) throw DomainError("growth must exceed 1");

  const std::vector<Index> caps = feasible_ranks(mode_sizes, opts.r_max);
  const Index r_cap = *std::max_element(caps.begin(), caps.end());
  const Index r_max = std::min(opts.r_max, r_cap);

  const std::uint64_t evals_before = f.evaluations();
  EvalCache cache;
  CrossReport result;
  Index r = std::min(opts.r0, r_max);
  int total_sweeps = 0;
  bool adapted = false;
  bool reduced = false;
  std::vector<Index> tried;
  while (true) {
    tried.push_back(r);
    CrossOptions pass_opts = opts.cross;
    CrossEngine engine(f, mode_sizes, pass_opts, cache);
    const std::vector<Index> working = feasible_ranks(mode_sizes, r);
    CrossReport pass = engine.run(working);
    total_sweeps += pass.sweeps_used;
    reduced = reduced || pass.rank_reduced;
    TensorTrain rounded = tt_round(pass.tt, opts.round_tol);

    bool underestimated = false;
    for (std::size_t b = 1; b + 1 < rounded.ranks().size(); ++b) {
      if (rounded.ranks()[b] >= r) underestimated = true;
    }
    if (underestimated && r < r_max) {
      r = std::min(static_cast<Index>(std::ceil(opts.growth * static_cast<double>(r))), r_max);
      adapted = true;
      continue;
    }
    result = std::move(pass);
    result.tt = std::move(rounded);
    result.saturated = underestimated;
    break;
  }
  result.final_ranks = result.tt.ranks();
  result.evals = f.evaluations() - evals_before;
  result.sweeps_used = total_sweeps;
  result.adapted = adapted;
  result.rank_reduced = reduced;
  result.working_ranks = std::move(tried);
  return result;
}

}  // namespace ttgp

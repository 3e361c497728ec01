#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "ttgp/tensor_train.hpp"

namespace ttgp {

/// A deterministic function on the grid with an evaluation counter.
///
/// The batch callback receives `count` multi-indices packed row-major into
/// `indices` (count * d values, 1-based) and writes one value per index.
class BlackBox {
 public:
  using BatchFn =
      std::function<void(std::span<const Index> indices, Index count, std::span<double> out)>;
  using PointFn = std::function<double(const MultiIndex&)>;

  BlackBox(Index order, BatchFn fn);
  static BlackBox pointwise(Index order, PointFn fn);

  Index order() const { return order_; }
  std::uint64_t evaluations() const { return evaluations_; }

  /// Evaluates `count` indices. Throws EvaluationError naming the offending
  /// index when the callback fails or returns a non-finite value.
  void evaluate(std::span<const Index> indices, Index count, std::span<double> out);
  double operator()(const MultiIndex& idx);

 private:
  Index order_;
  BatchFn fn_;
  std::uint64_t evaluations_ = 0;
};

/// Partial multi-indices (1-based) selected by the cross sweeps. Entry b of
/// `left` holds the r_b prefixes (i_1..i_b); entry b of `right` holds the r_b
/// suffixes (i_{b+1}..i_d).
using IndexSets = std::vector<std::vector<std::vector<Index>>>;

struct CrossReport {
  TensorTrain tt;
  std::uint64_t evals = 0;
  std::vector<Index> final_ranks;
  int sweeps_used = 0;
  /// Rank growth happened in the adaptive loop.
  bool adapted = false;
  /// The adaptive loop stopped at r_max with a rank still not reduced.
  bool saturated = false;
  /// Some unfolding had numerical rank below the working rank.
  bool rank_reduced = false;
  /// Working ranks tried by the adaptive loop, in order.
  std::vector<Index> working_ranks;
  IndexSets left;
  IndexSets right;
};

struct CrossOptions {
  /// One sweep = a left-to-right and a right-to-left pass.
  int sweeps = 2;
  std::uint64_t seed = 0;
  /// Fresh random column sets tried in the first pass when a fiber matrix
  /// comes out rank deficient.
  int max_resample = 2;
  double maxvol_delta = 0.01;
  int maxvol_iters = 100;
};

/// TT-cross at fixed working ranks (d + 1 entries, r_0 = r_d = 1). Ranks above
/// what an unfolding admits are capped; ranks above an unfolding's numerical
/// rank are reduced to it (flagged in the report).
CrossReport tt_cross(BlackBox& f, std::span<const Index> mode_sizes, std::span<const Index> ranks,
                     const CrossOptions& opts = {});

struct AdaptiveCrossOptions {
  Index r0 = 2;
  Index r_max = 64;
  double round_tol = 1e-6;
  double growth = 2.0;
  CrossOptions cross;
};

/// Runs tt_cross at a uniform working rank r, rounds the result to
/// `round_tol`, and grows r by `growth` (capped at r_max) while some rounded
/// rank still equals r. Returns the rounded tensor.
CrossReport tt_cross_adaptive(BlackBox& f, std::span<const Index> mode_sizes,
                              const AdaptiveCrossOptions& opts = {});

}  // namespace ttgp

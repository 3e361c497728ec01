#include <cmath>
#include <numbers>

#include "doctest.h"
#include "helpers.hpp"
#include "ttgp/cross.hpp"

using namespace ttgp;
using testutil::grid_point;

namespace {

std::vector<Index> uniform_ranks(Index d, Index r) {
  std::vector<Index> ranks(static_cast<std::size_t>(d + 1), r);
  ranks.front() = ranks.back() = 1;
  return ranks;
}

BlackBox sum_box(Index d, Index n) {
  return BlackBox::pointwise(d, [n](const MultiIndex& idx) {
    double s = 0.0;
    for (Index i : idx.values()) s += grid_point(i, n);
    return s;
  });
}

double cross_error(const TensorTrain& tt, const std::vector<Index>& modes,
                   const std::function<double(const std::vector<Index>&)>& f) {
  return testutil::rel_error(testutil::naive_full(tt), testutil::dense_of(modes, f));
}

}  // namespace

TEST_SUITE("cross") {

TEST_CASE("black box counts evaluations and validates values") {
  BlackBox f = BlackBox::pointwise(2, [](const MultiIndex& idx) {
    if (idx[0] == 3) return std::nan("");
    return static_cast<double>(idx[0] * idx[1]);
  });
  CHECK(f(MultiIndex{2, 2}) == 4.0);
  std::vector<Index> packed{1, 1, 2, 3};
  std::vector<double> out(2);
  f.evaluate(packed, 2, out);
  CHECK(out[1] == 6.0);
  CHECK(f.evaluations() == 3);
  try {
    f(MultiIndex{3, 1});
    FAIL("expected EvaluationError");
  } catch (const EvaluationError& e) {
    CHECK(std::string(e.what()).find("(3, 1)") != std::string::npos);
  }
}

TEST_CASE("rank-1 product on a 5x5 grid") {
  BlackBox f = BlackBox::pointwise(2, [](const MultiIndex& idx) { return static_cast<double>(idx[0] * idx[1]); });
  const std::vector<Index> modes{5, 5};
  const CrossReport rep = tt_cross(f, modes, std::vector<Index>{1, 1, 1});
  const auto err = testutil::diff_norm(testutil::naive_full(rep.tt), testutil::dense_of(modes, [](const std::vector<Index>& i) {
    return static_cast<double>(i[0] * i[1]);
  }));
  CHECK(err <= 1e-10);
  CHECK(rep.evals <= 25);
  CHECK(rep.final_ranks == rep.tt.ranks());
}

TEST_CASE("sum of coordinates at rank 2 is exact") {
  const std::vector<Index> modes{5, 5, 5, 5};
  BlackBox f = sum_box(4, 5);
  const CrossReport rep = tt_cross(f, modes, uniform_ranks(4, 2));
  CHECK(cross_error(rep.tt, modes, [](const std::vector<Index>& idx) {
          double s = 0.0;
          for (Index i : idx) s += grid_point(i, 5);
          return s;
        }) <= 1e-10);
}

TEST_CASE("separable sine product with zeros on the boundary") {
  const Index d = 6;
  const Index n = 8;
  const std::vector<Index> modes(static_cast<std::size_t>(d), n);
  auto g = [n](const std::vector<Index>& idx) {
    double p = 1.0;
    for (Index i : idx) p *= std::sin(std::numbers::pi * grid_point(i, n));
    return p;
  };
  BlackBox f = BlackBox::pointwise(d, [&](const MultiIndex& idx) { return g(idx.values()); });
  CrossOptions opts;
  opts.sweeps = 2;
  const CrossReport rep = tt_cross(f, modes, uniform_ranks(d, 1), opts);
  CHECK(testutil::diff_norm(testutil::naive_full(rep.tt), testutil::dense_of(modes, g)) <= 1e-10);
  CHECK(rep.evals <= static_cast<std::uint64_t>(opts.sweeps * d * n * 1 * 2));
}

TEST_CASE("evaluation count stays within the budget") {
  for (Index r : {2, 4, 8}) {
    const Index d = 8;
    const Index n = 10;
    const std::vector<Index> modes(static_cast<std::size_t>(d), n);
    const TensorTrain truth = tt_random(modes, uniform_ranks(d, 8), 31);
    BlackBox f = BlackBox::pointwise(d, [&](const MultiIndex& idx) { return tt_eval(truth, idx); });
    const CrossReport rep = tt_cross(f, modes, uniform_ranks(d, r));
    CHECK(rep.evals == f.evaluations());
    CHECK(rep.evals <= static_cast<std::uint64_t>(8 * d * n * r * r));
    CHECK(rep.tt.ranks() == feasible_ranks(modes, r));
  }
}

TEST_CASE("overestimated ranks are reduced and still exact") {
  const std::vector<Index> modes{5, 5, 5, 5};
  BlackBox f = sum_box(4, 5);
  const CrossReport rep = tt_cross(f, modes, uniform_ranks(4, 4));
  CHECK(rep.rank_reduced);
  CHECK(rep.tt.ranks() == std::vector<Index>{1, 2, 2, 2, 1});
  CHECK(cross_error(rep.tt, modes, [](const std::vector<Index>& idx) {
          double s = 0.0;
          for (Index i : idx) s += grid_point(i, 5);
          return s;
        }) <= 1e-10);
}

TEST_CASE("exact recovery of random low-rank tensors") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const std::vector<Index> modes{6, 5, 7, 6, 5};
    const TensorTrain truth = tt_random(modes, std::vector<Index>{1, 3, 3, 3, 3, 1}, seed);
    BlackBox f = BlackBox::pointwise(5, [&](const MultiIndex& idx) { return tt_eval(truth, idx); });
    CrossOptions opts;
    opts.seed = seed;
    const CrossReport rep = tt_cross(f, modes, std::vector<Index>{1, 3, 3, 3, 3, 1}, opts);
    CHECK(testutil::rel_error(testutil::naive_full(rep.tt), testutil::naive_full(truth)) <= 1e-8);
  }
}

TEST_CASE("result interpolates the black box on the selected fibers") {
  const std::vector<Index> modes{6, 6, 6, 6};
  auto g = [](const std::vector<Index>& idx) {
    double s = 0.0;
    for (std::size_t k = 0; k < idx.size(); ++k) s += static_cast<double>(k + 1) * grid_point(idx[k], 6);
    return 1.0 / (1.0 + s);
  };
  BlackBox f = BlackBox::pointwise(4, [&](const MultiIndex& idx) { return g(idx.values()); });
  const CrossReport rep = tt_cross(f, modes, uniform_ranks(4, 3));
  const Index d = 4;
  for (Index k = 0; k < d; ++k) {
    for (const auto& left : rep.left[static_cast<std::size_t>(k)]) {
      for (const auto& right : rep.right[static_cast<std::size_t>(k + 1)]) {
        for (Index i = 1; i <= modes[static_cast<std::size_t>(k)]; ++i) {
          std::vector<Index> idx = left;
          idx.push_back(i);
          idx.insert(idx.end(), right.begin(), right.end());
          CHECK(std::abs(tt_eval(rep.tt, MultiIndex(idx)) - g(idx)) <= 1e-10);
        }
      }
    }
  }
}

TEST_CASE("cross is deterministic for a seed") {
  const std::vector<Index> modes{5, 6, 5};
  auto run = [&](std::uint64_t seed) {
    BlackBox f = BlackBox::pointwise(3, [](const MultiIndex& idx) {
      return std::exp(-0.1 * static_cast<double>(idx[0] * idx[1] + idx[2]));
    });
    CrossOptions opts;
    opts.seed = seed;
    return tt_cross(f, modes, uniform_ranks(3, 3), opts).tt;
  };
  CHECK(run(3) == run(3));
}

TEST_CASE("adaptive cross keeps rank 1 for a separable function") {
  const std::vector<Index> modes{6, 6, 6};
  BlackBox f = BlackBox::pointwise(3, [](const MultiIndex& idx) {
    return (1.0 + static_cast<double>(idx[0])) * std::exp(0.1 * static_cast<double>(idx[1])) /
           static_cast<double>(idx[2]);
  });
  AdaptiveCrossOptions opts;
  opts.r0 = 2;
  const CrossReport rep = tt_cross_adaptive(f, modes, opts);
  CHECK(rep.tt.ranks() == std::vector<Index>{1, 1, 1, 1});
  CHECK_FALSE(rep.adapted);
  CHECK_FALSE(rep.saturated);
}

TEST_CASE("adaptive cross grows to the true rank") {
  const std::vector<Index> modes(5, 5);
  BlackBox f = sum_box(5, 5);
  AdaptiveCrossOptions opts;
  opts.r0 = 1;
  opts.growth = 2;
  const CrossReport rep = tt_cross_adaptive(f, modes, opts);
  CHECK(rep.tt.ranks() == std::vector<Index>{1, 2, 2, 2, 2, 1});
  CHECK(rep.adapted);
  CHECK(rep.working_ranks.front() == 1);
  CHECK(cross_error(rep.tt, modes, [](const std::vector<Index>& idx) {
          double s = 0.0;
          for (Index i : idx) s += grid_point(i, 5);
          return s;
        }) <= 1e-8);
}

TEST_CASE("adaptive cross flags saturation at r_max") {
  // Four distinct separable products: TT-rank 4 at every internal position.
  const std::vector<Index> modes{6, 6, 6, 6};
  auto g = [](const std::vector<Index>& idx) {
    double s = 0.0;
    for (int t = 1; t <= 4; ++t) {
      double p = 1.0;
      for (Index i : idx) p *= std::cos(0.7 * t * grid_point(i, 6) + 0.3 * t);
      s += p;
    }
    return s;
  };
  const std::vector<double> dense = testutil::dense_of(modes, g);
  for (std::size_t k = 1; k < 4; ++k) REQUIRE(testutil::unfolding_rank(modes, dense, k) == 4);
  BlackBox f = BlackBox::pointwise(4, [&](const MultiIndex& idx) { return g(idx.values()); });
  AdaptiveCrossOptions opts;
  opts.r0 = 2;
  opts.r_max = 3;
  const CrossReport rep = tt_cross_adaptive(f, modes, opts);
  CHECK(rep.saturated);
  CHECK(rep.tt.max_rank() <= 3);
}

TEST_CASE("bad arguments") {
  BlackBox f = sum_box(3, 4);
  const std::vector<Index> modes{4, 4, 4};
  CHECK_THROWS(tt_cross(f, modes, std::vector<Index>{1, 2, 1}));
  AdaptiveCrossOptions opts;
  opts.growth = 1.0;
  CHECK_THROWS(tt_cross_adaptive(f, modes, opts));
  opts = {};
  opts.round_tol = 0.0;
  CHECK_THROWS(tt_cross_adaptive(f, modes, opts));
  BlackBox wrong = sum_box(2, 4);
  CHECK_THROWS(tt_cross(wrong, modes, std::vector<Index>{1, 2, 2, 1}));
}

}  // TEST_SUITE

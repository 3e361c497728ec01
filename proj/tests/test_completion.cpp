#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "ttgp/completion.hpp"
#include "ttgp/harness.hpp"

using namespace ttgp;

namespace {

std::vector<Index> uniform_ranks(Index d, Index r) {
  std::vector<Index> ranks(static_cast<std::size_t>(d + 1), r);
  ranks.front() = ranks.back() = 1;
  return ranks;
}

// Observations of `truth` at `count` seeded random positions.
ObservationSet observe(const TensorTrain& truth, Index count, std::uint64_t seed) {
  const IndexSplit split = sample_omega(truth.mode_sizes(), count, 0, seed);
  Eigen::VectorXd y(count);
  for (Index r = 0; r < count; ++r) {
    std::vector<Index> idx;
    for (Index k = 0; k < split.train.cols(); ++k) idx.push_back(split.train(r, k));
    y(r) = testutil::naive_entry(truth, idx);
  }
  return ObservationSet(truth.mode_sizes(), split.train, y);
}

ObservationSet noisy_observations(const std::vector<Index>& modes, Index count, std::uint64_t seed) {
  const IndexSplit split = sample_omega(modes, count, 0, seed);
  std::mt19937_64 rng(seed + 100);
  std::normal_distribution<double> g;
  Eigen::VectorXd y(count);
  for (Index r = 0; r < count; ++r) y(r) = g(rng);
  return ObservationSet(modes, split.train, y);
}

double fd_objective(TensorTrain tt, const ObservationSet& obs, std::span<const Index> rows, Index k, std::size_t e,
                    double h) {
  tt.core_values(k)[e] += h;
  double s = 0.0;
  for (Index r : rows) {
    const double res = tt_eval_unchecked(tt, obs.zero_based(r)) - obs.value(r);
    s += res * res;
  }
  return s;
}

}  // namespace

TEST_SUITE("completion") {

TEST_CASE("objective against brute force") {
  const TensorTrain tt = tt_random(std::vector<Index>{4, 4, 4}, uniform_ranks(3, 2), 3);
  const ObservationSet obs = noisy_observations({4, 4, 4}, 20, 5);
  double want = 0.0;
  for (Index r = 0; r < obs.size(); ++r) {
    const auto m = obs.index_matrix();
    const std::vector<Index> idx{m(r, 0), m(r, 1), m(r, 2)};
    const double e = testutil::naive_entry(tt, idx) - obs.value(r);
    want += e * e;
  }
  CHECK(objective(tt, obs) == doctest::Approx(want).epsilon(1e-10));

  const ObservationSet empty({4, 4, 4}, std::vector<Index>{}, Eigen::VectorXd());
  CHECK(objective(tt, empty) == 0.0);
  CHECK(objective(tt, observe(tt, 15, 2)) <= 1e-24);
  CHECK_THROWS_AS(objective(tt_random(std::vector<Index>{4, 4}, uniform_ranks(2, 1), 0), obs), ShapeError);
}

TEST_CASE("gradient of a rank-1 matrix by hand") {
  Core a(1, 2, 1, {2.0, 3.0});
  Core b(1, 2, 1, {5.0, 7.0});
  const TensorTrain tt({a, b});
  Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic> idx(1, 2);
  idx << 2, 1;
  const ObservationSet obs({2, 2}, idx, Eigen::VectorXd::Constant(1, 10.0));
  // tt(2, 1) = 3 * 5 = 15, residual 5.
  const std::vector<Core> g = grad_cores(tt, obs);
  CHECK(g[0](0, 0, 0) == 0.0);
  CHECK(g[0](0, 1, 0) == doctest::Approx(2 * 5 * 5.0));
  CHECK(g[1](0, 0, 0) == doctest::Approx(2 * 5 * 3.0));
  CHECK(g[1](0, 1, 0) == 0.0);
}

TEST_CASE("gradient matches central differences") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const std::vector<Index> modes{3, 3, 3, 3};
    const TensorTrain tt = tt_random(modes, uniform_ranks(4, 2), seed);
    const ObservationSet obs = noisy_observations(modes, 10, seed);
    std::vector<Index> rows(10);
    for (Index r = 0; r < 10; ++r) rows[static_cast<std::size_t>(r)] = r;
    const std::vector<Core> g = grad_cores(tt, obs);
    for (Index k = 0; k < 4; ++k) {
      for (std::size_t e = 0; e < g[static_cast<std::size_t>(k)].data().size(); ++e) {
        const double h = 1e-6;
        const double fd = (fd_objective(tt, obs, rows, k, e, h) - fd_objective(tt, obs, rows, k, e, -h)) / (2 * h);
        const double an = g[static_cast<std::size_t>(k)].data()[e];
        CHECK(std::abs(fd - an) <= 1e-5 * std::max(1.0, std::abs(fd)));
      }
    }
  }
}

TEST_CASE("gradient batches") {
  const TensorTrain tt = tt_random(std::vector<Index>{3, 3}, uniform_ranks(2, 2), 1);
  const ObservationSet obs = observe(tt, 4, 2);
  CHECK_THROWS_AS(grad_cores(tt, obs, std::vector<Index>{}), DomainError);
  const std::vector<Core> g = grad_cores(tt, obs, std::vector<Index>{1});
  for (const Core& c : g)
    for (double v : c.data()) CHECK(std::abs(v) <= 1e-12);
}

TEST_CASE("fully observed matrix is fitted in one sweep") {
  const TensorTrain truth = tt_random(std::vector<Index>{3, 3}, uniform_ranks(2, 2), 4);
  const ObservationSet obs = observe(truth, 9, 1);
  const TensorTrain start = tt_random(std::vector<Index>{3, 3}, uniform_ranks(2, 2), 99);
  const TensorTrain after = als_sweep(start, obs, 0.0);
  CHECK(objective(after, obs) <= 1e-15);
}

TEST_CASE("ALS is monotone on rank-1 data") {
  const std::vector<Index> modes{5, 4, 6};
  const TensorTrain truth = tt_random(modes, uniform_ranks(3, 1), 7);
  const ObservationSet obs = observe(truth, 30, 3);
  for (RidgeAnchor anchor : {RidgeAnchor::Zero, RidgeAnchor::Previous}) {
    TensorTrain tt = tt_random(modes, uniform_ranks(3, 1), 8);
    double prev = objective(tt, obs);
    const double first = prev;
    for (int s = 0; s < 10; ++s) {
      std::vector<double> halves;
      tt = als_sweep(tt, obs, 0.0, anchor, &halves);
      REQUIRE(halves.size() == 2);
      for (double h : halves) {
        CHECK(h <= prev + 1e-12 * first);
        prev = h;
      }
      CHECK(objective(tt, obs) == doctest::Approx(halves.back()).epsilon(1e-9).scale(first));
    }
  }
}

TEST_CASE("unobserved slices are left untouched") {
  const std::vector<Index> modes{4, 4, 4};
  Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic> idx(6, 3);
  idx << 1, 1, 1, 2, 2, 2, 3, 1, 2, 1, 3, 3, 2, 1, 3, 3, 3, 1;  // slice 4 never used
  const ObservationSet obs(modes, idx, Eigen::VectorXd::LinSpaced(6, 1.0, 2.0));
  const TensorTrain tt = tt_random(modes, uniform_ranks(3, 2), 5);
  const TensorTrain after = als_sweep(tt, obs, 1e-8);
  for (Index k = 0; k < 3; ++k) {
    const Eigen::MatrixXd before = tt.core(k).slice(3);
    const Eigen::MatrixXd now = after.core(k).slice(3);
    CHECK(before == now);
    CHECK_FALSE(Eigen::MatrixXd(tt.core(k).slice(0)) == Eigen::MatrixXd(after.core(k).slice(0)));
  }
}

TEST_CASE("complete with ALS never increases the objective") {
  const std::vector<Index> modes{5, 5, 5, 5};
  const TensorTrain truth = tt_random(modes, uniform_ranks(4, 3), 1);
  const ObservationSet obs = observe(truth, 200, 2);
  CompletionOptions opts;
  opts.n_iters = 8;
  const CompletionTrace t = complete(tt_random(modes, uniform_ranks(4, 3), 3), obs, opts);
  REQUIRE(t.objective.size() == 9);
  for (std::size_t i = 1; i < t.objective.size(); ++i) CHECK(t.objective[i] <= t.objective[i - 1] * (1 + 1e-12));
  CHECK(t.tt.ranks() == uniform_ranks(4, 3));
  CHECK(t.tt.mode_sizes() == modes);
}

TEST_CASE("SGD with zero step changes nothing") {
  const std::vector<Index> modes{4, 4, 4};
  const TensorTrain tt = tt_random(modes, uniform_ranks(3, 2), 4);
  const ObservationSet obs = noisy_observations(modes, 30, 2);
  CompletionOptions opts;
  opts.method = CompletionMethod::SGD;
  opts.sgd_lr = 0.0;
  opts.n_iters = 20;
  const CompletionTrace t = complete(tt, obs, opts);
  CHECK(t.tt == tt);
  for (double v : t.objective) CHECK(v == t.objective.front());
}

TEST_CASE("SGD reduces the training objective") {
  const std::vector<Index> modes{6, 6, 6};
  const TensorTrain truth = tt_random(modes, uniform_ranks(3, 2), 11);
  const ObservationSet obs = observe(truth, 120, 12);
  CompletionOptions opts;
  opts.method = CompletionMethod::SGD;
  opts.n_iters = 500;
  opts.sgd_lr = 0.05;
  opts.sgd_batch = 16;
  opts.seed = 3;
  opts.trace_every = 50;
  const CompletionTrace t = complete(random_init(obs, 2, 13), obs, opts);
  CHECK(t.iters.back() == 500);
  CHECK(t.iters.size() == 11);
  CHECK(t.objective.back() * 10 <= t.objective.front());
  const CompletionTrace again = complete(random_init(obs, 2, 13), obs, opts);
  CHECK(again.objective == t.objective);
  CHECK(again.tt == t.tt);
}

TEST_CASE("divergence is reported with the iteration") {
  const std::vector<Index> modes{4, 4, 4};
  const ObservationSet obs = noisy_observations(modes, 30, 2);
  CompletionOptions opts;
  opts.method = CompletionMethod::SGD;
  opts.sgd_lr = 1e6;
  opts.n_iters = 200;
  try {
    complete(random_init(obs, 3, 1), obs, opts);
    FAIL("expected DivergenceError");
  } catch (const DivergenceError& e) {
    CHECK(e.iteration() >= 1);
    CHECK(e.iteration() <= 200);
  }
}

TEST_CASE("trace CSV") {
  CompletionTrace t;
  t.iters = {0, 1};
  t.objective = {2.0, 0.5};
  t.seconds = {0.0, 0.25};
  const auto path = std::filesystem::temp_directory_path() / "ttgp_trace.csv";
  write_trace_csv(t, path);
  std::ifstream in(path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(text == "iter,objective,seconds\n0,2,\n1,0.5,\n");
  write_trace_csv(t, path, true);
  std::ifstream in2(path);
  std::string timed((std::istreambuf_iterator<char>(in2)), std::istreambuf_iterator<char>());
  CHECK(timed == "iter,objective,seconds\n0,2,0\n1,0.5,0.25\n");
  std::filesystem::remove(path);
}

TEST_CASE("method names") {
  CHECK(parse_completion_method("sgd") == CompletionMethod::SGD);
  CHECK_THROWS_AS(parse_completion_method("adam"), ConfigError);
  CHECK(parse_ridge_anchor("zero") == RidgeAnchor::Zero);
}

}  // TEST_SUITE

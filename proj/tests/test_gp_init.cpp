#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "ttgp/gp_init.hpp"
#include "ttgp/harness.hpp"
#include "ttgp/tt_io.hpp"

using namespace ttgp;

namespace {

ObservationSet sum_observations(Index d, Index n, Index count, std::uint64_t seed) {
  const std::vector<Index> modes(static_cast<std::size_t>(d), n);
  const IndexSplit split = sample_omega(modes, count, 0, seed);
  Eigen::VectorXd y(count);
  for (Index r = 0; r < count; ++r) {
    double s = 0.0;
    for (Index k = 0; k < d; ++k) s += testutil::grid_point(split.train(r, k), n);
    y(r) = s;
  }
  return ObservationSet(modes, split.train, y);
}

std::filesystem::path temp_dir(const char* name) {
  const auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_SUITE("gp_init") {

TEST_CASE("rescaling maps the grid to the unit cube") {
  const std::vector<Index> modes{5, 3, 1};
  CHECK(rescale_index({1, 1, 1}, modes) == std::vector<double>{0.0, 0.0, 0.5});
  CHECK(rescale_index({5, 3, 1}, modes) == std::vector<double>{1.0, 1.0, 0.5});
  CHECK(rescale_index({2, 2, 1}, modes) == std::vector<double>{0.25, 0.5, 0.5});
  CHECK_THROWS_AS(rescale_index({6, 1, 1}, modes), DomainError);
}

TEST_CASE("observation sets validate indices") {
  Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic> idx(3, 2);
  idx << 1, 1, 2, 3, 1, 2;
  const ObservationSet obs({2, 3}, idx, Eigen::Vector3d(1, 2, 3));
  CHECK(obs.size() == 3);
  CHECK(obs.index(1) == MultiIndex{2, 3});
  CHECK(obs.zero_based(1)[1] == 2);
  CHECK(obs.index_matrix() == idx);

  Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic> dup(3, 2);
  dup << 1, 1, 2, 3, 1, 1;
  try {
    ObservationSet bad({2, 3}, dup, Eigen::Vector3d(1, 2, 3));
    FAIL("expected DomainError");
  } catch (const DomainError& e) {
    CHECK(std::string(e.what()).find("duplicate") != std::string::npos);
  }
  Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic> out(1, 2);
  out << 3, 1;
  CHECK_THROWS_AS(ObservationSet({2, 3}, out, Eigen::VectorXd::Ones(1)), DomainError);
  CHECK_THROWS_AS(ObservationSet({2, 3}, idx, Eigen::VectorXd::Ones(2)), ShapeError);
}

TEST_CASE("observation CSV round trip") {
  const auto dir = temp_dir("ttgp_obs_test");
  const ObservationSet obs = sum_observations(3, 4, 20, 1);
  save_observations(obs, dir / "obs.csv");
  CHECK(std::filesystem::exists(dir / "obs.csv.json"));
  const ObservationSet back = load_observations(dir / "obs.csv");
  CHECK(back.mode_sizes() == obs.mode_sizes());
  CHECK(back.index_matrix() == obs.index_matrix());
  CHECK(back.values() == obs.values());
  const std::vector<Index> modes{4, 4, 4};
  CHECK(load_observations(dir / "obs.csv", modes).size() == 20);

  std::ofstream(dir / "bad.csv") << "i_1,i_2,y\n1,1,0.5\n1,x,2\n";
  CHECK_THROWS_AS(load_observations(dir / "bad.csv", std::vector<Index>{2, 2}), ParseError);
  std::ofstream(dir / "hdr.csv") << "a,b,y\n1,1,0.5\n";
  CHECK_THROWS_AS(load_observations(dir / "hdr.csv", std::vector<Index>{2, 2}), ParseError);
  std::ofstream(dir / "dup.csv") << "i_1,i_2,y\n1,1,0.5\n1,1,2\n";
  CHECK_THROWS_AS(load_observations(dir / "dup.csv", std::vector<Index>{2, 2}), DomainError);
  CHECK_THROWS_AS(load_observations(dir / "missing.csv", std::vector<Index>{2, 2}), IoError);
  CHECK_THROWS_AS(load_observations(dir / "hdr.csv"), IoError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("GP initialization of a sum of coordinates") {
  const ObservationSet obs = sum_observations(4, 10, 500, 3);
  const InitReport rep = gp_tt_init(obs);
  for (Index r : rep.tt0.ranks()) CHECK(r <= 3);
  const double var = (obs.values().array() - obs.values().mean()).square().mean();
  CHECK(rep.train_error <= 1e-4 * var);
  double sse = 0.0;
  for (Index r = 0; r < obs.size(); ++r) {
    const double e = tt_eval(rep.tt0, obs.index(r)) - obs.value(r);
    sse += e * e;
  }
  CHECK(rep.train_error == doctest::Approx(sse / 500.0).epsilon(1e-12));

  // The TT approximates the GP mean over the whole grid.
  const std::vector<Index>& modes = obs.mode_sizes();
  std::vector<double> gp_dense;
  testutil::for_each_index(modes, [&](const std::vector<Index>& idx) {
    gp_dense.push_back(rep.gp.predict_mean(rescale_index(MultiIndex(idx), modes)));
  });
  const DenseTensor full = tt_full(rep.tt0);
  const std::vector<double> tt_dense(full.values().begin(), full.values().end());
  CHECK(testutil::rel_error(tt_dense, gp_dense) <= 1e-5);
}

TEST_CASE("GP initialization of a constant tensor") {
  const std::vector<Index> modes{6, 6, 6};
  const IndexSplit split = sample_omega(modes, 60, 0, 2);
  const ObservationSet obs(modes, split.train, Eigen::VectorXd::Constant(60, -1.5));
  const InitReport rep = gp_tt_init(obs);
  CHECK(rep.tt0.max_rank() == 1);
  CHECK(rep.train_error <= 1e-10);
}

TEST_CASE("GP initialization is deterministic") {
  const ObservationSet obs = sum_observations(3, 6, 80, 4);
  InitOptions opts;
  opts.gp.seed = 12;
  opts.cross.cross.seed = 13;
  CHECK(tt_serialize(gp_tt_init(obs, opts).tt0) == tt_serialize(gp_tt_init(obs, opts).tt0));
}

TEST_CASE("GP initialization labels failing stages") {
  const ObservationSet one = sum_observations(2, 4, 1, 0);
  CHECK_THROWS_AS(gp_tt_init(one), DomainError);
}

TEST_CASE("random initialization matches the variance target") {
  const ObservationSet obs = sum_observations(4, 5, 100, 6);
  const TensorTrain a = random_init(obs, 3, 42);
  const double target = obs.values().norm() * std::sqrt(625.0 / 100.0);
  CHECK(std::abs(tt_norm(a) - target) <= 1e-10 * target);
  CHECK(a.ranks() == std::vector<Index>{1, 3, 3, 3, 1});
  CHECK(random_init(obs, 3, 42) == a);
  CHECK_FALSE(random_init(obs, 3, 43) == a);
  const std::vector<Index> ranks{1, 2, 4, 2, 1};
  CHECK(random_init(obs, ranks, 1).ranks() == ranks);
}

}  // TEST_SUITE

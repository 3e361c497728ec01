// Acceptance checks. One PASS/FAIL line per criterion; exit status 1 when any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>

#include "cli.hpp"
#include "helpers.hpp"
#include "ttgp/completion.hpp"
#include "ttgp/cross.hpp"
#include "ttgp/gp.hpp"
#include "ttgp/gp_init.hpp"
#include "ttgp/harness.hpp"
#include "ttgp/maxvol.hpp"
#include "ttgp/tt_io.hpp"

using namespace ttgp;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(3);
  s << v;
  return s.str();
}

std::vector<Index> uniform_ranks(Index d, Index r) {
  std::vector<Index> ranks(static_cast<std::size_t>(d + 1), r);
  ranks.front() = ranks.back() = 1;
  return ranks;
}

// 1. Sum of coordinates, d=6, n=5, adaptive cross from r0=1.
Outcome exact_recovery() {
  const auto t0 = Clock::now();
  const Index d = 6;
  const Index n = 5;
  const std::vector<Index> modes(static_cast<std::size_t>(d), n);
  auto g = [n](const std::vector<Index>& idx) {
    double s = 0.0;
    for (Index i : idx) s += testutil::grid_point(i, n);
    return s;
  };
  BlackBox f = BlackBox::pointwise(d, [&](const MultiIndex& idx) { return g(idx.values()); });
  AdaptiveCrossOptions opts;
  opts.r0 = 1;
  const CrossReport rep = tt_cross_adaptive(f, modes, opts);
  const double secs = seconds_since(t0);
  const double err = testutil::rel_error(testutil::naive_full(rep.tt), testutil::dense_of(modes, g));
  bool ranks_ok = true;
  for (Index k = 1; k < d; ++k) ranks_ok = ranks_ok && rep.tt.ranks()[static_cast<std::size_t>(k)] == 2;
  return {ranks_ok && err <= 1e-8 && secs < 5.0,
          "internal ranks all 2: " + std::string(ranks_ok ? "yes" : "no") + ", rel error " + fmt(err) + ", " +
              fmt(secs) + " s"};
}

// 2. Evaluation count at fixed rank, 2 sweeps, d=8, n=10.
Outcome evaluation_budget() {
  const Index d = 8;
  const Index n = 10;
  const std::vector<Index> modes(static_cast<std::size_t>(d), n);
  const TensorTrain truth = tt_random(modes, uniform_ranks(d, 8), 17);
  bool ok = true;
  std::string detail;
  for (Index r : {2, 4, 8}) {
    BlackBox f = BlackBox::pointwise(d, [&](const MultiIndex& idx) { return tt_eval(truth, idx); });
    CrossOptions opts;
    opts.sweeps = 2;
    const CrossReport rep = tt_cross(f, modes, uniform_ranks(d, r), opts);
    const auto budget = static_cast<std::uint64_t>(8 * d * n * r * r);
    ok = ok && f.evaluations() <= budget;
    detail += "r=" + std::to_string(r) + ": " + std::to_string(f.evaluations()) + "/" + std::to_string(budget) + " ";
  }
  return {ok, detail};
}

// 3. Rounding error bound against the dense tensor.
Outcome rounding_bound() {
  std::mt19937_64 rng(3);
  int failures = 0;
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    const Index d = std::uniform_int_distribution<Index>(2, 6)(rng);
    std::vector<Index> modes(static_cast<std::size_t>(d));
    for (Index& m : modes) m = std::uniform_int_distribution<Index>(2, 6)(rng);
    std::vector<Index> ranks(static_cast<std::size_t>(d + 1), 1);
    for (Index k = 1; k < d; ++k) ranks[static_cast<std::size_t>(k)] = std::uniform_int_distribution<Index>(1, 5)(rng);
    TensorTrain tt = tt_random(modes, feasible_ranks(modes, ranks), rng());
    // Decaying rank components so that truncation actually happens.
    const double decay = std::uniform_real_distribution<double>(0.5, 6.0)(rng);
    for (Index k = 0; k < d; ++k) {
      const Core& c = tt.core(k);
      const Index rl = c.r_left();
      const Index nk = c.n();
      std::span<double> v = tt.core_values(k);
      for (Index b = 0; b < c.r_right(); ++b)
        for (Index i = 0; i < nk; ++i)
          for (Index a = 0; a < rl; ++a) v[static_cast<std::size_t>(a + rl * (i + nk * b))] *= std::exp(-decay * b);
    }
    const std::vector<double> dense = testutil::naive_full(tt);
    const double nrm = testutil::norm(dense);
    for (double eps : {1e-2, 1e-6}) {
      const double err = testutil::diff_norm(testutil::naive_full(tt_round(tt, eps)), dense);
      worst = std::max(worst, err / (eps * nrm));
      if (err > eps * nrm) ++failures;
    }
  }
  return {failures == 0, std::to_string(failures) + " failures in 400 checks, worst err/(eps*norm) " + fmt(worst)};
}

// 4. GP: likelihood gradient, noiseless interpolation, 2-point posterior.
Outcome gp_correctness() {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const KernelFamily families[] = {KernelFamily::Exponential, KernelFamily::Matern32, KernelFamily::Matern52,
                                   KernelFamily::RBF};
  double worst_grad = 0.0;
  for (int t = 0; t < 50; ++t) {
    const Index n = std::uniform_int_distribution<Index>(2, 20)(rng);
    const Index d = std::uniform_int_distribution<Index>(1, 3)(rng);
    Eigen::MatrixXd x(n, d);
    for (Index i = 0; i < n; ++i)
      for (Index k = 0; k < d; ++k) x(i, k) = u(rng);
    Eigen::VectorXd y(n);
    for (Index i = 0; i < n; ++i) y(i) = std::sin(3 * x(i, 0)) + 0.3 * u(rng);
    y.array() -= y.mean();
    Kernel k;
    k.family = families[t % 4];
    const bool aniso = t % 2 == 0 && d > 1;
    k.lengthscales.assign(aniso ? static_cast<std::size_t>(d) : 1, 0.0);
    for (double& l : k.lengthscales) l = 0.2 + u(rng);
    k.amplitude = 0.5 + u(rng);
    const double noise = 0.01 + 0.1 * u(rng);
    const LmlResult an = log_marginal_likelihood(k, noise, x, y);
    const Eigen::VectorXd theta = pack_log_params(k, noise);
    Eigen::VectorXd fd(theta.size());
    const double h = 1e-5;
    for (Index p = 0; p < theta.size(); ++p) {
      auto value_at = [&](double step) {
        Eigen::VectorXd th = theta;
        th(p) += step;
        Kernel kk = k;
        double nn = noise;
        unpack_log_params(th, kk, nn);
        return log_marginal_likelihood(kk, nn, x, y, false).value;
      };
      fd(p) = (value_at(h) - value_at(-h)) / (2 * h);
    }
    worst_grad = std::max(worst_grad, (fd - an.gradient).norm() / std::max(an.gradient.norm(), 1e-12));
  }

  // Noiseless interpolation with noise variance 1e-12.
  double worst_interp = 0.0;
  for (KernelFamily fam : families) {
    Eigen::MatrixXd x(40, 2);
    for (Index i = 0; i < 40; ++i) x.row(i) << u(rng), u(rng);
    Eigen::VectorXd y(40);
    for (Index i = 0; i < 40; ++i) y(i) = std::cos(4 * x(i, 0)) + x(i, 1) * x(i, 1);
    Kernel k;
    k.family = fam;
    k.lengthscales = {0.4};
    const GpModel m = GpModel::condition(x, y, k, 1e-12);
    const double sd = std::sqrt((y.array() - y.mean()).square().mean());
    worst_interp = std::max(worst_interp, (m.predict_mean(x) - y).cwiseAbs().maxCoeff() / sd);
  }

  // X = {0, 1}, y = {0, 1}, RBF with unit lengthscale, no noise. The model
  // centers y by its mean, so the oracle does the same.
  Eigen::MatrixXd x2(2, 1);
  x2 << 0.0, 1.0;
  const Eigen::Vector2d y2(0.0, 1.0);
  Kernel rbf;
  const GpModel toy = GpModel::condition(x2, y2, rbf, 0.0);
  double worst_toy = 0.0;
  for (double xs : {0.5, 0.3, -0.7}) {
    const double k12 = std::exp(-0.5);
    const double det = 1.0 - k12 * k12;
    const double yc0 = -0.5;
    const double yc1 = 0.5;
    const double a0 = (yc0 - k12 * yc1) / det;
    const double a1 = (yc1 - k12 * yc0) / det;
    const double want = 0.5 + std::exp(-0.5 * xs * xs) * a0 + std::exp(-0.5 * (xs - 1) * (xs - 1)) * a1;
    worst_toy = std::max(worst_toy, std::abs(toy.predict_mean(std::vector<double>{xs}) - want));
  }
  return {worst_grad <= 1e-5 && worst_interp <= 1e-6 && worst_toy <= 1e-12,
          "(a) worst gradient rel error " + fmt(worst_grad) + ", (b) max residual/std " + fmt(worst_interp) +
              ", (c) 2-point error " + fmt(worst_toy)};
}

// 5. Maxvol dominance on random 50x5 matrices.
Outcome maxvol_dominance() {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  double worst_coeff = 0.0;
  double worst_swap = 0.0;
  int unconverged = 0;
  for (int t = 0; t < 100; ++t) {
    Eigen::MatrixXd m(50, 5);
    for (Index j = 0; j < 5; ++j)
      for (Index i = 0; i < 50; ++i) m(i, j) = g(rng);
    const MaxvolResult res = maxvol(m);
    if (!res.converged) ++unconverged;
    Eigen::MatrixXd sub(5, 5);
    for (Index a = 0; a < 5; ++a) sub.row(a) = m.row(res.rows[static_cast<std::size_t>(a)]);
    const Eigen::MatrixXd coeffs = m * sub.inverse();
    worst_coeff = std::max(worst_coeff, coeffs.cwiseAbs().maxCoeff());
    const double base = std::abs(sub.determinant());
    for (Index a = 0; a < 5; ++a) {
      for (Index i = 0; i < 50; ++i) {
        Eigen::MatrixXd s = sub;
        s.row(a) = m.row(i);
        worst_swap = std::max(worst_swap, std::abs(s.determinant()) / base);
      }
    }
  }
  return {unconverged == 0 && worst_coeff <= 1.01 && worst_swap <= 1.01,
          "max |M M[I]^-1| " + fmt(worst_coeff) + ", best swap gain " + fmt(worst_swap) + ", unconverged " +
              std::to_string(unconverged)};
}

// 6. ALS overfits a d=6, n=5 problem with N=500 and more parameters than data.
Outcome als_fit() {
  const std::vector<Index> modes(6, 5);
  const IndexSplit split = sample_omega(modes, 500, 0, 21);
  const SyntheticFunction f = sample_gp_function(KernelFamily::RBF, 0.5, 6, 512, 22);
  Eigen::MatrixXd x(500, 6);
  for (Index r = 0; r < 500; ++r)
    for (Index k = 0; k < 6; ++k) x(r, k) = testutil::grid_point(split.train(r, k), 5);
  const ObservationSet obs(modes, split.train, f.evaluate(x));
  TensorTrain tt = random_init(obs, 12, 23);
  const Index params = tt.parameter_count();
  const double var = (obs.values().array() - obs.values().mean()).square().mean();
  const double lambda = 1e-14 * var;
  double prev = objective(tt, obs);
  const double first = prev;
  bool monotone = true;
  int sweeps = 0;
  double mse = prev / 500.0;
  while (sweeps < 100 && mse >= 1e-20) {
    std::vector<double> halves;
    tt = als_sweep(tt, obs, lambda, RidgeAnchor::Previous, &halves);
    ++sweeps;
    for (double h : halves) {
      if (h > prev + 1e-13 * first) monotone = false;
      prev = h;
    }
    mse = objective(tt, obs) / 500.0;
  }
  return {params > 500 && monotone && mse < 1e-20,
          std::to_string(params) + " parameters, training MSE " + fmt(mse) + " after " + std::to_string(sweeps) +
              " sweeps, half-sweeps nonincreasing: " + (monotone ? "yes" : "no")};
}

// 7. Core gradient against central differences.
Outcome gradient_check() {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    const Index d = std::uniform_int_distribution<Index>(2, 5)(rng);
    std::vector<Index> modes(static_cast<std::size_t>(d));
    for (Index& m : modes) m = std::uniform_int_distribution<Index>(2, 5)(rng);
    const TensorTrain tt = tt_random(modes, feasible_ranks(modes, 3), seed + 100);
    const IndexSplit split = sample_omega(modes, std::min<Index>(15, static_cast<Index>(grid_size(modes))), 0, seed);
    std::normal_distribution<double> g;
    Eigen::VectorXd y(split.train.rows());
    for (Index r = 0; r < y.size(); ++r) y(r) = g(rng);
    const ObservationSet obs(modes, split.train, y);
    const std::vector<Core> grad = grad_cores(tt, obs);
    for (Index k = 0; k < d; ++k) {
      const auto& an = grad[static_cast<std::size_t>(k)].data();
      Eigen::VectorXd a(static_cast<Index>(an.size())), fd(static_cast<Index>(an.size()));
      for (std::size_t e = 0; e < an.size(); ++e) {
        const double h = 1e-6;
        TensorTrain p = tt;
        TensorTrain m = tt;
        p.core_values(k)[e] += h;
        m.core_values(k)[e] -= h;
        fd(static_cast<Index>(e)) = (objective(p, obs) - objective(m, obs)) / (2 * h);
        a(static_cast<Index>(e)) = an[e];
      }
      worst = std::max(worst, (fd - a).norm() / std::max(a.norm(), 1e-12));
    }
  }
  return {worst <= 1e-5, "worst rel error " + fmt(worst) + " over 20 instances"};
}

// 8 and 9. The random vs GP initialization grid.
struct GridOutcome {
  Outcome benefit;
  Outcome gap;
};

GridOutcome init_grid() {
  ExperimentConfig c;
  c.kernels = {KernelFamily::RBF, KernelFamily::Matern52};
  c.dims = {3, 4, 5};
  c.sizes = {10};
  c.n_train = {500, 1000};
  c.seeds = {0, 1, 2, 3, 4};
  c.n_test = 1000;
  c.optimizer.method = CompletionMethod::ALS;
  c.optimizer.n_iters = 30;
  c.init.gp.hyper_max_train = 400;
  const auto t0 = Clock::now();
  const ExperimentReport rep = run_experiment(c);
  const double secs = seconds_since(t0);

  int cells = 0;
  int wins = 0;
  int failed = 0;
  int gap_ok = 0;
  double worst_ratio = std::numeric_limits<double>::infinity();
  std::vector<double> imps;
  for (std::size_t i = 0; i + 1 < rep.rows.size(); i += 2) {
    const ExperimentRow& r = rep.rows[i];
    const ExperimentRow& g = rep.rows[i + 1];
    ++cells;
    if (r.status != "ok" || g.status != "ok") {
      ++failed;
      imps.push_back(-std::numeric_limits<double>::infinity());
      continue;
    }
    if (g.test_mse_rel < r.test_mse_rel) ++wins;
    imps.push_back(g.improvement);
    const double ratio = r.init_train_mse / g.init_train_mse;
    worst_ratio = std::min(worst_ratio, ratio);
    if (ratio >= 1e3) ++gap_ok;
  }
  std::sort(imps.begin(), imps.end());
  const std::size_t m = imps.size();
  const double median = m == 0 ? 0.0 : (m % 2 ? imps[m / 2] : 0.5 * (imps[m / 2 - 1] + imps[m / 2]));
  const double win_rate = cells ? static_cast<double>(wins) / cells : 0.0;
  GridOutcome out;
  out.benefit = {cells == 60 && win_rate >= 0.7 && median > 0 && secs < 1800,
                 std::to_string(wins) + "/" + std::to_string(cells) + " GP wins, median improvement " + fmt(median) +
                     ", " + std::to_string(failed) + " failed cells, " + fmt(secs) + " s"};
  out.gap = {cells == 60 && gap_ok == cells,
             std::to_string(gap_ok) + "/" + std::to_string(cells) + " cells with ratio >= 1e3, smallest ratio " +
                 fmt(worst_ratio)};
  return out;
}

// 10. Every CLI subcommand twice with the same seed.
int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "ttgp");
  std::vector<const char*> argv;
  for (const auto& s : args) argv.push_back(s.c_str());
  std::ostringstream out, err;
  return cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::ifstream in(e.path(), std::ios::binary);
    files[e.path().filename().string()] = {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  }
  return files;
}

Outcome cli_determinism() {
  const fs::path dir = fs::temp_directory_path() / "ttgp_acceptance_cli";
  auto run_all = [&]() -> std::map<std::string, std::string> {
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::vector<Index> modes{8, 8, 8};
    const SyntheticFunction f = sample_gp_function(KernelFamily::Matern52, 0.4, 3, 256, 1);
    const IndexSplit split = sample_omega(modes, 150, 0, 2);
    Eigen::MatrixXd x(150, 3);
    for (Index r = 0; r < 150; ++r)
      for (Index k = 0; k < 3; ++k) x(r, k) = testutil::grid_point(split.train(r, k), 8);
    save_observations(ObservationSet(modes, split.train, f.evaluate(x)), dir / "obs.csv");
    std::ofstream(dir / "idx.csv") << "i_1,i_2,i_3\n1,1,1\n8,8,8\n3,5,7\n";
    std::ofstream(dir / "exp.json") << R"({"kernel": ["rbf"], "d": 2, "n": 6, "N": 20, "N_test": 10,
      "features": 128, "optimizer": {"iters": 3}, "random_ranks": [1, 2]})";
    const std::string d = dir.string() + "/";
    const std::string seed = "7";
    int bad = 0;
    bad += cli({"init", "--obs", d + "obs.csv", "--out", d + "init.tt", "--gp-model", d + "gp.json", "--seed", seed}) != 0;
    bad += cli({"complete", "--obs", d + "obs.csv", "--init", "random", "--rank", "3", "--method", "sgd", "--iters",
                "50", "--out", d + "sgd.tt", "--report", d + "sgd.csv", "--seed", seed}) != 0;
    bad += cli({"complete", "--obs", d + "obs.csv", "--init", "gp", "--iters", "5", "--out", d + "als.json",
                "--report", d + "als.csv", "--seed", seed}) != 0;
    bad += cli({"cross", "--gp-model", d + "gp.json", "--modes", "8,8,8", "--out", d + "cross.tt", "--report",
                d + "cross.json", "--seed", seed}) != 0;
    bad += cli({"eval", "--tt", d + "als.json", "--indices", d + "idx.csv", "--out", d + "eval.csv"}) != 0;
    bad += cli({"experiment", "--config", d + "exp.json", "--report", d + "exp.csv", "--seed", seed}) != 0;
    if (bad) return {};
    return snapshot(dir);
  };
  const auto a = run_all();
  const auto b = run_all();
  fs::remove_all(dir);
  int differing = 0;
  for (const auto& [name, bytes] : a) {
    const auto it = b.find(name);
    if (it == b.end() || it->second != bytes) ++differing;
  }
  const bool ok = !a.empty() && a.size() == b.size() && differing == 0;
  return {ok, std::to_string(a.size()) + " output files, " + std::to_string(differing) + " differ" +
                  (a.empty() ? " (a command failed)" : "")};
}

}  // namespace

int main(int argc, char** argv) {
  // Optional argument: run only the listed criteria, e.g. "1,2,10".
  std::vector<int> only;
  if (argc > 1) {
    std::stringstream ss(argv[1]);
    std::string tok;
    while (std::getline(ss, tok, ',')) only.push_back(std::stoi(tok));
  }
  auto wanted = [&](int c) { return only.empty() || std::find(only.begin(), only.end(), c) != only.end(); };

  const std::vector<std::pair<int, std::string>> names{
      {1, "exact low-rank recovery"},  {2, "evaluation budget"},   {3, "rounding bound"},
      {4, "GP correctness"},           {5, "maxvol dominance"},    {6, "ALS monotone machine-precision fit"},
      {7, "core gradient check"},      {8, "GP init beats random"}, {9, "initialization error gap"},
      {10, "CLI determinism"}};
  const std::map<int, std::function<Outcome()>> single{
      {1, exact_recovery}, {2, evaluation_budget}, {3, rounding_bound}, {4, gp_correctness},
      {5, maxvol_dominance}, {6, als_fit}, {7, gradient_check}, {10, cli_determinism}};

  std::optional<GridOutcome> grid;
  int failed = 0;
  for (const auto& [id, name] : names) {
    if (!wanted(id)) continue;
    Outcome o;
    try {
      if (id == 8 || id == 9) {
        if (!grid) grid = init_grid();
        o = id == 8 ? grid->benefit : grid->gap;
      } else {
        o = single.at(id)();
      }
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("criterion %2d %s: %s (%s)\n", id, o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}

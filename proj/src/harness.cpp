#include "ttgp/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <tuple>
#include <unordered_set>

#include "sampling.hpp"

namespace ttgp {

// --- synthetic functions ----------------------------------------------------------

double SyntheticFunction::operator()(std::span<const double> x) const {
  if (static_cast<Index>(x.size()) != dimension()) throw ShapeError("point has the wrong dimension");
  const Eigen::Map<const Eigen::VectorXd> p(x.data(), dimension());
  const Eigen::VectorXd arg = omega * p + phases;
  return std::sqrt(2.0 / static_cast<double>(features())) * weights.dot(arg.array().cos().matrix());
}

Eigen::VectorXd SyntheticFunction::evaluate(const Eigen::MatrixXd& x) const {
  if (x.cols() != dimension()) throw ShapeError("points have the wrong dimension");
  Eigen::MatrixXd arg = omega * x.transpose();  // m x P
  arg.colwise() += phases;
  const Eigen::VectorXd out = arg.array().cos().matrix().transpose() * weights;
  return std::sqrt(2.0 / static_cast<double>(features())) * out;
}

SyntheticFunction sample_gp_function(KernelFamily family, double lengthscale, Index d, Index m,
                                     std::uint64_t seed) {
  if (m < 1) throw DomainError("feature count must be positive");
  if (d < 1) throw DomainError("dimension must be positive");
  if (!(lengthscale > 0) || !std::isfinite(lengthscale)) throw DomainError("lengthscale must be positive");
  SyntheticFunction f;
  f.family = family;
  f.lengthscale = lengthscale;
  f.seed = seed;
  f.omega.resize(m, d);
  f.phases.resize(m);
  f.weights.resize(m);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  double nu = 0.0;
  switch (family) {
    case KernelFamily::Exponential: nu = 0.5; break;
    case KernelFamily::Matern32: nu = 1.5; break;
    case KernelFamily::Matern52: nu = 2.5; break;
    case KernelFamily::RBF: break;
  }
  std::chi_squared_distribution<double> chi2(nu > 0 ? 2.0 * nu : 1.0);
  for (Index j = 0; j < m; ++j) {
    double scale = 1.0 / lengthscale;
    if (nu > 0) scale *= std::sqrt(2.0 * nu / chi2(rng));
    for (Index k = 0; k < d; ++k) f.omega(j, k) = normal(rng) * scale;
    f.phases(j) = phase(rng);
    f.weights(j) = normal(rng);
  }
  return f;
}

// --- sampling and metrics --------------------------------------------------------

IndexSplit sample_omega(std::span<const Index> mode_sizes, Index n_train, Index n_test, std::uint64_t seed) {
  if (mode_sizes.empty()) throw DomainError("grid needs at least one mode");
  for (Index n : mode_sizes) {
    if (n < 1) throw DomainError("mode sizes must be positive");
  }
  if (n_train < 0 || n_test < 0) throw DomainError("sample sizes must be non-negative");
  const double total = grid_size(mode_sizes);
  const Index want = n_train + n_test;
  if (static_cast<double>(want) > total) {
    throw DomainError("cannot draw " + std::to_string(want) + " distinct indices from a grid of " +
                      std::to_string(total));
  }
  const Index d = static_cast<Index>(mode_sizes.size());
  std::mt19937_64 rng(seed);
  std::vector<Index> packed(static_cast<std::size_t>(want * d));
  if (total < 4e18) {
    const std::vector<Index> lin = detail::sample_distinct(static_cast<Index>(total), want, rng);
    for (Index p = 0; p < want; ++p) {
      Index rest = lin[static_cast<std::size_t>(p)];
      for (Index k = 0; k < d; ++k) {
        const Index n = mode_sizes[static_cast<std::size_t>(k)];
        packed[static_cast<std::size_t>(p * d + k)] = rest % n + 1;
        rest /= n;
      }
    }
  } else {
    std::set<std::vector<Index>> seen;
    std::vector<Index> cur(static_cast<std::size_t>(d));
    Index p = 0;
    while (p < want) {
      for (Index k = 0; k < d; ++k) {
        std::uniform_int_distribution<Index> u(1, mode_sizes[static_cast<std::size_t>(k)]);
        cur[static_cast<std::size_t>(k)] = u(rng);
      }
      if (!seen.insert(cur).second) continue;
      std::copy(cur.begin(), cur.end(), packed.begin() + p * d);
      ++p;
    }
  }
  IndexSplit out;
  out.train.resize(n_train, d);
  out.test.resize(n_test, d);
  for (Index p = 0; p < want; ++p) {
    for (Index k = 0; k < d; ++k) {
      const Index v = packed[static_cast<std::size_t>(p * d + k)];
      if (p < n_train) {
        out.train(p, k) = v;
      } else {
        out.test(p - n_train, k) = v;
      }
    }
  }
  return out;
}

double mse(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth) {
  if (pred.size() != truth.size()) throw ShapeError("prediction and truth differ in length");
  if (pred.size() < 1) throw DomainError("mse needs at least one value");
  return (pred - truth).squaredNorm() / static_cast<double>(pred.size());
}

double mse_rel(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth) {
  const double e = mse(pred, truth);
  const double var = (truth.array() - truth.mean()).square().mean();
  if (!(var > 0)) throw DomainError("relative mse is undefined for constant test values");
  return e / var;
}

double clamp_improvement(double raw) { return std::isnan(raw) ? raw : std::clamp(raw, -1.0, 1.0); }

std::pair<Index, Index> fit_sample_sizes(double grid, Index n_train, Index n_test) {
  if (static_cast<double>(n_train + n_test) <= grid) return {n_train, n_test};
  const Index total = static_cast<Index>(grid);
  const Index floor_test = std::min(n_test, std::max<Index>(1, (total + 9) / 10));
  const Index test = std::max(floor_test, total - n_train);
  return {total - test, test};
}

// --- configuration ----------------------------------------------------------------

namespace {

template <typename T>
std::vector<T> grid_field(const nlohmann::json& doc, const char* key, std::vector<T> fallback) {
  if (!doc.contains(key)) return fallback;
  const nlohmann::json& v = doc.at(key);
  std::vector<T> out;
  if (v.is_array()) {
    out = v.get<std::vector<T>>();
  } else {
    out.push_back(v.get<T>());
  }
  if (out.empty()) throw ConfigError(std::string("config field '") + key + "' is an empty list");
  return out;
}

void reject_unknown(const nlohmann::json& doc, std::initializer_list<const char*> known, const std::string& where) {
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return it.key() == k; })) {
      throw ConfigError("unknown config key '" + it.key() + "'" + where);
    }
  }
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over a combined word
  std::uint64_t z = a * 0x9E3779B97F4A7C15ull + b + 0x632BE59BD9B4E019ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("experiment config must be a JSON object");
  ExperimentConfig c;
  try {
    reject_unknown(doc,
                   {"kernel", "d", "n", "N", "seed", "N_test", "function", "constant", "lengthscale", "features",
                    "observations", "optimizer", "random_ranks", "init", "fit_to_grid"},
                   "");
    std::vector<std::string> kernels = grid_field<std::string>(doc, "kernel", {"rbf"});
    c.kernels.clear();
    for (const auto& k : kernels) c.kernels.push_back(parse_kernel_family(k));
    c.dims = grid_field<Index>(doc, "d", c.dims);
    c.sizes = grid_field<Index>(doc, "n", c.sizes);
    c.n_train = grid_field<Index>(doc, "N", c.n_train);
    c.seeds = grid_field<std::uint64_t>(doc, "seed", c.seeds);
    c.n_test = doc.value("N_test", c.n_test);
    c.function = doc.value("function", c.function);
    c.constant = doc.value("constant", c.constant);
    c.lengthscale = doc.value("lengthscale", c.lengthscale);
    c.features = doc.value("features", c.features);
    c.fit_to_grid = doc.value("fit_to_grid", c.fit_to_grid);
    if (doc.contains("observations")) c.observations = doc.at("observations").get<std::string>();
    if (doc.contains("random_ranks")) c.random_ranks = doc.at("random_ranks").get<std::vector<Index>>();
    if (doc.contains("optimizer")) {
      const auto& o = doc.at("optimizer");
      reject_unknown(o, {"method", "iters", "ridge", "anchor", "lr", "decay", "batch", "trace_every"}, " in optimizer");
      if (o.contains("method")) c.optimizer.method = parse_completion_method(o.at("method").get<std::string>());
      c.optimizer.n_iters = o.value("iters", c.optimizer.n_iters);
      if (o.contains("ridge")) c.optimizer.als_ridge = o.at("ridge").get<double>();
      if (o.contains("anchor")) c.optimizer.anchor = parse_ridge_anchor(o.at("anchor").get<std::string>());
      if (o.contains("lr")) c.optimizer.sgd_lr = o.at("lr").get<double>();
      c.optimizer.sgd_decay = o.value("decay", c.optimizer.sgd_decay);
      c.optimizer.sgd_batch = o.value("batch", c.optimizer.sgd_batch);
      c.optimizer.trace_every = o.value("trace_every", c.optimizer.trace_every);
    }
    if (doc.contains("init")) {
      const auto& o = doc.at("init");
      reject_unknown(o,
                     {"kernel", "r0", "r_max", "round_tol", "growth", "sweeps", "max_train", "hyper_max_train", "polish_iters",
                      "max_iters", "anisotropic"},
                     " in init");
      if (o.contains("kernel")) {
        const std::string k = o.at("kernel").get<std::string>();
        c.init_kernel = k == "match" ? std::nullopt : std::optional(parse_kernel_family(k));
      }
      c.init.cross.r0 = o.value("r0", c.init.cross.r0);
      c.init.cross.r_max = o.value("r_max", c.init.cross.r_max);
      c.init.cross.round_tol = o.value("round_tol", c.init.cross.round_tol);
      c.init.cross.growth = o.value("growth", c.init.cross.growth);
      c.init.cross.cross.sweeps = o.value("sweeps", c.init.cross.cross.sweeps);
      c.init.gp.max_train = o.value("max_train", c.init.gp.max_train);
      c.init.gp.hyper_max_train = o.value("hyper_max_train", c.init.gp.hyper_max_train);
      c.init.gp.polish_iters = o.value("polish_iters", c.init.gp.polish_iters);
      c.init.gp.max_iters = o.value("max_iters", c.init.gp.max_iters);
      if (o.contains("anisotropic")) c.init.gp.anisotropic = o.at("anisotropic").get<bool>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad experiment config: ") + e.what());
  }
  if (c.function != "rff" && c.function != "constant") throw ConfigError("function must be 'rff' or 'constant'");
  if (c.n_test < 1) throw ConfigError("N_test must be positive");
  for (Index v : c.dims) {
    if (v < 1) throw ConfigError("d must be positive");
  }
  for (Index v : c.sizes) {
    if (v < 1) throw ConfigError("n must be positive");
  }
  for (Index v : c.n_train) {
    if (v < 2) throw ConfigError("N must be at least 2");
  }
  for (Index v : c.random_ranks) {
    if (v < 1) throw ConfigError("random ranks must be positive");
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config", path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed config: ") + e.what(), e.byte);
  }
  return from_json(doc);
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json doc;
  std::vector<std::string> k;
  for (KernelFamily f : kernels) k.push_back(to_string(f));
  doc["kernel"] = k;
  doc["d"] = dims;
  doc["n"] = sizes;
  doc["N"] = n_train;
  doc["seed"] = seeds;
  doc["N_test"] = n_test;
  doc["function"] = function;
  doc["constant"] = constant;
  doc["lengthscale"] = lengthscale;
  doc["features"] = features;
  doc["fit_to_grid"] = fit_to_grid;
  if (observations) doc["observations"] = observations->string();
  doc["random_ranks"] = random_ranks;
  nlohmann::json o;
  o["method"] = to_string(optimizer.method);
  o["iters"] = optimizer.n_iters;
  if (optimizer.als_ridge) o["ridge"] = *optimizer.als_ridge;
  o["anchor"] = to_string(optimizer.anchor);
  if (optimizer.sgd_lr) o["lr"] = *optimizer.sgd_lr;
  o["decay"] = optimizer.sgd_decay;
  o["batch"] = optimizer.sgd_batch;
  o["trace_every"] = optimizer.trace_every;
  doc["optimizer"] = o;
  nlohmann::json i;
  i["kernel"] = init_kernel ? to_string(*init_kernel) : "match";
  i["r0"] = init.cross.r0;
  i["r_max"] = init.cross.r_max;
  i["round_tol"] = init.cross.round_tol;
  i["growth"] = init.cross.growth;
  i["sweeps"] = init.cross.cross.sweeps;
  i["max_train"] = init.gp.max_train;
  i["hyper_max_train"] = init.gp.hyper_max_train;
  i["polish_iters"] = init.gp.polish_iters;
  i["max_iters"] = init.gp.max_iters;
  if (init.gp.anisotropic) i["anisotropic"] = *init.gp.anisotropic;
  doc["init"] = i;
  return doc;
}

// --- experiment -------------------------------------------------------------------

namespace {

struct CellData {
  ObservationSet train;
  ObservationSet test;
};

Eigen::VectorXd predict(const TensorTrain& tt, const ObservationSet& obs) {
  Eigen::VectorXd out(obs.size());
  for (Index r = 0; r < obs.size(); ++r) out(r) = tt_eval_unchecked(tt, obs.zero_based(r));
  return out;
}

struct ArmResult {
  Index rank_max = 0;
  double init_train_mse = 0.0;
  double train_mse = 0.0;
  double test_mse = 0.0;
  double test_mse_rel = 0.0;
  double score = 0.0;
  int iters = 0;
  std::uint64_t evals = 0;
};

ArmResult finish(const TensorTrain& tt0, const CellData& data, const CompletionOptions& opt) {
  ArmResult a;
  a.init_train_mse = objective(tt0, data.train) / static_cast<double>(data.train.size());
  const CompletionTrace t = complete(tt0, data.train, opt);
  a.rank_max = t.tt.max_rank();
  a.train_mse = t.objective.back() / static_cast<double>(data.train.size());
  const Eigen::VectorXd pred = predict(t.tt, data.test);
  a.test_mse = mse(pred, data.test.values());
  // Constant test values leave the relative error undefined; score by the raw error instead.
  const Eigen::VectorXd& y = data.test.values();
  const bool flat = (y.array() == y(0)).all();
  a.test_mse_rel = flat ? std::numeric_limits<double>::quiet_NaN() : mse_rel(pred, y);
  a.score = flat ? a.test_mse : a.test_mse_rel;
  a.iters = t.iters.back();
  return a;
}

void fill(ExperimentRow& row, const ArmResult& a) {
  row.rank_max = a.rank_max;
  row.init_train_mse = a.init_train_mse;
  row.train_mse = a.train_mse;
  row.test_mse = a.test_mse;
  row.test_mse_rel = a.test_mse_rel;
  row.score = a.score;
  row.iters = a.iters;
  row.evals = a.evals;
}

void run_cell(const ExperimentConfig& cfg, const CellData& data, std::uint64_t seed, KernelFamily init_family,
              ExperimentRow base, ExperimentReport& report) {
  using Clock = std::chrono::steady_clock;
  CompletionOptions opt = cfg.optimizer;
  opt.seed = mix(seed, 3);

  ExperimentRow random_row = base;
  random_row.arm = "random";
  {
    const auto t0 = Clock::now();
    std::vector<Index> ranks = cfg.random_ranks;
    if (ranks.empty()) {
      const Index top = *std::min_element(data.train.mode_sizes().begin(), data.train.mode_sizes().end());
      for (Index r = 1; r <= top; ++r) ranks.push_back(r);
    }
    std::optional<ArmResult> best;
    std::string last_error;
    for (Index r : ranks) {
      try {
        const TensorTrain tt0 = random_init(data.train, r, mix(seed, 100 + static_cast<std::uint64_t>(r)));
        const ArmResult a = finish(tt0, data, opt);
        if (!best || a.score < best->score) best = a;
      } catch (const std::exception& e) {
        last_error = "rank " + std::to_string(r) + ": " + e.what();
      }
    }
    if (best) {
      fill(random_row, *best);
    } else {
      random_row.status = "failed";
      random_row.error = last_error;
    }
    random_row.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  }

  ExperimentRow gp_row = base;
  gp_row.arm = "gp";
  {
    const auto t0 = Clock::now();
    try {
      InitOptions init = cfg.init;
      init.gp.family = init_family;
      init.gp.seed = mix(seed, 1);
      init.cross.cross.seed = mix(seed, 2);
      const InitReport rep = gp_tt_init(data.train, init);
      ArmResult a = finish(rep.tt0, data, opt);
      a.evals = rep.cross.evals;
      fill(gp_row, a);
    } catch (const std::exception& e) {
      gp_row.status = "failed";
      gp_row.error = e.what();
    }
    gp_row.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  }

  double imp = std::numeric_limits<double>::quiet_NaN();
  if (random_row.status == "ok" && gp_row.status == "ok") imp = random_row.score - gp_row.score;
  const double clamped = clamp_improvement(imp);
  for (ExperimentRow* r : {&random_row, &gp_row}) {
    r->improvement = imp;
    r->improvement_clamped = clamped;
  }
  report.rows.push_back(std::move(random_row));
  report.rows.push_back(std::move(gp_row));
}

ObservationSet observe(const std::vector<Index>& modes, const Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic>& idx,
                       const ExperimentConfig& cfg, const SyntheticFunction* f) {
  Eigen::VectorXd y(idx.rows());
  if (f) {
    Eigen::MatrixXd x(idx.rows(), idx.cols());
    for (Index r = 0; r < idx.rows(); ++r) {
      for (Index k = 0; k < idx.cols(); ++k) {
        const Index n = modes[static_cast<std::size_t>(k)];
        x(r, k) = n > 1 ? static_cast<double>(idx(r, k) - 1) / static_cast<double>(n - 1) : 0.5;
      }
    }
    y = f->evaluate(x);
  } else {
    y.setConstant(cfg.constant);
  }
  return ObservationSet(modes, idx, std::move(y));
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  ExperimentReport report;
  const std::string opt_name = to_string(cfg.optimizer.method);

  if (cfg.observations) {
    const ObservationSet all = load_observations(*cfg.observations);
    if (cfg.n_test >= all.size()) throw ConfigError("N_test must be smaller than the number of observations");
    for (std::uint64_t seed : cfg.seeds) {
      std::mt19937_64 rng(mix(seed, 0));
      std::vector<Index> perm = detail::sample_distinct(all.size(), all.size(), rng);
      const std::span<const Index> test_rows(perm.data(), static_cast<std::size_t>(cfg.n_test));
      const std::span<const Index> train_rows(perm.data() + cfg.n_test, perm.size() - static_cast<std::size_t>(cfg.n_test));
      CellData data{all.subset(train_rows), all.subset(test_rows)};
      ExperimentRow base;
      base.kernel = to_string(cfg.init_kernel.value_or(KernelFamily::RBF));
      base.d = all.order();
      base.n = *std::max_element(all.mode_sizes().begin(), all.mode_sizes().end());
      base.n_train = data.train.size();
      base.seed = seed;
      base.optimizer = opt_name;
      run_cell(cfg, data, seed, cfg.init_kernel.value_or(KernelFamily::RBF), base, report);
    }
    return report;
  }

  for (KernelFamily family : cfg.kernels) {
    for (Index d : cfg.dims) {
      for (Index n : cfg.sizes) {
        for (Index n_train : cfg.n_train) {
          for (std::uint64_t seed : cfg.seeds) {
            ExperimentRow base;
            base.kernel = to_string(family);
            base.d = d;
            base.n = n;
            base.seed = seed;
            base.optimizer = opt_name;
            const std::vector<Index> modes(static_cast<std::size_t>(d), n);
            auto [cell_train, cell_test] = std::pair{n_train, cfg.n_test};
            if (cfg.fit_to_grid) std::tie(cell_train, cell_test) = fit_sample_sizes(grid_size(modes), n_train, cfg.n_test);
            base.n_train = cell_train;
            std::optional<CellData> data;
            try {
              std::optional<SyntheticFunction> f;
              if (cfg.function == "rff") f = sample_gp_function(family, cfg.lengthscale, d, cfg.features, mix(seed, 10));
              const IndexSplit split = sample_omega(modes, cell_train, cell_test, mix(seed, 11));
              data.emplace(CellData{observe(modes, split.train, cfg, f ? &*f : nullptr),
                                    observe(modes, split.test, cfg, f ? &*f : nullptr)});
            } catch (const std::exception& e) {
              for (const char* arm : {"random", "gp"}) {
                ExperimentRow row = base;
                row.arm = arm;
                row.status = "failed";
                row.error = std::string("data: ") + e.what();
                row.improvement = row.improvement_clamped = std::numeric_limits<double>::quiet_NaN();
                report.rows.push_back(std::move(row));
              }
              continue;
            }
            run_cell(cfg, *data, seed, cfg.init_kernel.value_or(family), base, report);
          }
        }
      }
    }
  }
  return report;
}

namespace {

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

std::string num(double v) {
  if (std::isnan(v)) return "";
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

}  // namespace

void write_report_csv(const ExperimentReport& report, const std::filesystem::path& path, bool with_seconds) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write report", path.string());
  out << "kernel,d,n,N,seed,optimizer,arm,rank_max,init_train_mse,train_mse,test_mse,test_mse_rel,iters,evals,"
         "seconds,improvement,improvement_clamped,status,error\n";
  for (const ExperimentRow& r : report.rows) {
    const bool ok = r.status == "ok";
    out << r.kernel << "," << r.d << "," << r.n << "," << r.n_train << "," << r.seed << "," << r.optimizer << ","
        << r.arm << ",";
    if (ok) {
      out << r.rank_max << "," << num(r.init_train_mse) << "," << num(r.train_mse) << "," << num(r.test_mse) << ","
          << num(r.test_mse_rel) << "," << r.iters << "," << r.evals << ",";
    } else {
      out << ",,,,,,,";
    }
    out << (with_seconds ? num(r.seconds) : "") << "," << num(r.improvement) << "," << num(r.improvement_clamped)
        << "," << r.status << "," << csv_escape(r.error) << "\n";
  }
}

}  // namespace ttgp

#include "cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "ttgp/completion.hpp"
#include "ttgp/cross.hpp"
#include "ttgp/gp_init.hpp"
#include "ttgp/harness.hpp"
#include "ttgp/tt_io.hpp"

namespace ttgp::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kFooter =
    "Exit codes: 0 success, 1 other failure, 2 usage or configuration error, 3 file not readable or\n"
    "writable, 4 malformed input file, 5 pipeline stage failure (GP fit, cross, completion).\n"
    "On failure a JSON object {\"error\", \"message\", \"exit_code\", ...} is written to stderr.";

struct Args {
  std::string obs;
  std::string modes;
  std::string out;
  std::string init = "gp";
  std::string method = "als";
  int iters = 100;
  Index rank = 2;
  std::optional<Index> fixed_rank;
  Index r0 = 2;
  Index r_max = 64;
  double round_tol = 1e-6;
  std::string kernel = "rbf";
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string config;
  std::string report;
  std::string tt;
  std::string function;
  std::string gp_model;
  std::string indices;
  bool timing = false;
};

std::string number(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

void write_json(const fs::path& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write file", path.string());
  out << doc.dump(2) << "\n";
  if (!out) throw IoError("cannot write file", path.string());
}

void write_manifest(const fs::path& out, const std::string& command, const json& config, std::uint64_t seed) {
  fs::path p = out;
  p += ".manifest.json";
  write_json(p, json{{"tool", "ttgp"}, {"command", command}, {"seed", seed}, {"config", config}});
}

/// "5,5,5" or a JSON file with a "mode_sizes" array.
std::vector<Index> parse_modes(const std::string& text) {
  if (text.empty()) return {};
  if (text.find_first_not_of("0123456789, ") == std::string::npos) {
    std::vector<Index> out;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (tok.find_first_not_of(' ') == std::string::npos) throw ConfigError("empty entry in --modes");
      out.push_back(std::stoll(tok));
    }
    for (Index n : out) {
      if (n < 1) throw ConfigError("--modes entries must be positive");
    }
    return out;
  }
  return load_mode_sizes(text);
}

ObservationSet read_obs(const Args& a) {
  if (a.obs.empty()) throw ConfigError("--obs is required");
  return load_observations(a.obs, parse_modes(a.modes));
}

KernelFamily kernel_of(const Args& a) { return parse_kernel_family(a.kernel); }

InitOptions init_options(const Args& a) {
  InitOptions o;
  o.gp.family = kernel_of(a);
  o.gp.seed = a.seed;
  o.cross.r0 = a.r0;
  o.cross.r_max = a.r_max;
  o.cross.round_tol = a.round_tol;
  o.cross.cross.seed = a.seed + 1;
  return o;
}

json init_config_json(const Args& a) {
  return json{{"kernel", to_string(kernel_of(a))}, {"r0", a.r0}, {"r_max", a.r_max}, {"round_tol", a.round_tol}};
}

json cross_json(const CrossReport& c) {
  return json{{"evals", c.evals},
              {"final_ranks", c.final_ranks},
              {"sweeps_used", c.sweeps_used},
              {"adapted", c.adapted},
              {"saturated", c.saturated},
              {"rank_reduced", c.rank_reduced},
              {"working_ranks", c.working_ranks}};
}

json gp_summary(const GpModel& g) {
  return json{{"family", to_string(g.kernel().family)},
              {"lengthscales", g.kernel().lengthscales},
              {"amplitude", g.kernel().amplitude},
              {"noise", g.noise()},
              {"log_marginal_likelihood", g.log_marginal_likelihood()}};
}

fs::path require_out(const Args& a) {
  if (a.out.empty()) throw ConfigError("--out is required");
  return a.out;
}

int cmd_init(const Args& a, std::ostream&) {
  const fs::path out = require_out(a);
  const ObservationSet obs = read_obs(a);
  const InitReport rep = gp_tt_init(obs, init_options(a));
  save_tt(out, rep.tt0);
  if (!a.gp_model.empty()) rep.gp.save(a.gp_model);
  json config = init_config_json(a);
  config["obs"] = a.obs;
  config["mode_sizes"] = obs.mode_sizes();
  fs::path report = a.report;
  if (report.empty()) {
    report = out;
    report += ".report.json";
  }
  write_json(report, json{{"command", "init"},
                          {"seed", a.seed},
                          {"config", config},
                          {"ranks", rep.tt0.ranks()},
                          {"train_error", rep.train_error},
                          {"gp", gp_summary(rep.gp)},
                          {"cross", cross_json(rep.cross)}});
  write_manifest(out, "init", config, a.seed);
  return Ok;
}

int cmd_complete(const Args& a, std::ostream&) {
  const fs::path out = require_out(a);
  const ObservationSet obs = read_obs(a);
  json config{{"obs", a.obs}, {"mode_sizes", obs.mode_sizes()}, {"init", a.init}};
  TensorTrain tt0;
  if (a.init == "file") {
    if (a.tt.empty()) throw ConfigError("--init file needs --tt");
    tt0 = load_tt(a.tt);
    if (tt0.mode_sizes() != obs.mode_sizes()) throw ShapeError("tensor train and observations have different modes");
    config["tt"] = a.tt;
  } else if (a.init == "random") {
    tt0 = random_init(obs, a.rank, a.seed);
    config["rank"] = a.rank;
  } else if (a.init == "gp") {
    tt0 = gp_tt_init(obs, init_options(a)).tt0;
    config["gp_init"] = init_config_json(a);
  } else {
    throw ConfigError("--init must be random, gp or file");
  }

  CompletionOptions opts;
  opts.method = parse_completion_method(a.method);
  opts.n_iters = a.iters;
  opts.seed = a.seed;
  if (a.iters < 0) throw ConfigError("--iters must be non-negative");
  config["method"] = to_string(opts.method);
  config["iters"] = a.iters;

  const CompletionTrace t = complete(tt0, obs, opts);
  save_tt(out, t.tt);
  if (!a.report.empty()) write_trace_csv(t, a.report, a.timing);
  write_manifest(out, "complete", config, a.seed);
  return Ok;
}

/// Built-in analytic functions of the rescaled grid point x in [0, 1]^d.
BlackBox builtin_function(const std::string& name, const std::vector<Index>& modes) {
  const Index d = static_cast<Index>(modes.size());
  auto point = [modes](const MultiIndex& idx) { return rescale_index(idx, modes); };
  if (name == "sum") {
    return BlackBox::pointwise(d, [point](const MultiIndex& idx) {
      double s = 0.0;
      for (double x : point(idx)) s += x;
      return s;
    });
  }
  if (name == "sine") {
    return BlackBox::pointwise(d, [point](const MultiIndex& idx) {
      double p = 1.0;
      for (double x : point(idx)) p *= std::sin(std::numbers::pi * x);
      return p;
    });
  }
  if (name == "inverse") {
    return BlackBox::pointwise(d, [point](const MultiIndex& idx) {
      double s = 0.0;
      for (double x : point(idx)) s += x;
      return 1.0 / (1.0 + s);
    });
  }
  if (name == "gaussian") {
    return BlackBox::pointwise(d, [point](const MultiIndex& idx) {
      double s = 0.0;
      for (double x : point(idx)) s += (x - 0.5) * (x - 0.5);
      return std::exp(-s);
    });
  }
  throw ConfigError("unknown function '" + name + "' (expected sum, sine, inverse or gaussian)");
}

int cmd_cross(const Args& a, std::ostream&) {
  const fs::path out = require_out(a);
  const std::vector<Index> modes = parse_modes(a.modes);
  if (modes.empty()) throw ConfigError("--modes is required");
  if (a.function.empty() == a.gp_model.empty()) throw ConfigError("give exactly one of --function and --gp-model");
  json config{{"mode_sizes", modes}};
  std::optional<GpModel> model;
  std::optional<BlackBox> f;
  if (!a.function.empty()) {
    f.emplace(builtin_function(a.function, modes));
    config["function"] = a.function;
  } else {
    model = GpModel::load(a.gp_model);
    if (model->dimension() != static_cast<Index>(modes.size())) {
      throw ShapeError("GP model dimension does not match --modes");
    }
    f.emplace(gp_mean_black_box(*model, modes));
    config["gp_model"] = a.gp_model;
  }
  CrossReport rep;
  if (a.fixed_rank) {
    std::vector<Index> ranks(modes.size() + 1, *a.fixed_rank);
    ranks.front() = ranks.back() = 1;
    CrossOptions opts;
    opts.seed = a.seed;
    rep = tt_cross(*f, modes, ranks, opts);
    config["rank"] = *a.fixed_rank;
  } else {
    AdaptiveCrossOptions opts;
    opts.r0 = a.r0;
    opts.r_max = a.r_max;
    opts.round_tol = a.round_tol;
    opts.cross.seed = a.seed;
    rep = tt_cross_adaptive(*f, modes, opts);
    config["r0"] = a.r0;
    config["r_max"] = a.r_max;
    config["round_tol"] = a.round_tol;
  }
  save_tt(out, rep.tt);
  if (!a.report.empty()) {
    json doc{{"command", "cross"}, {"seed", a.seed}, {"config", config}, {"ranks", rep.tt.ranks()}};
    doc["cross"] = cross_json(rep);
    write_json(a.report, doc);
  }
  write_manifest(out, "cross", config, a.seed);
  return Ok;
}

/// Index list: CSV rows of 1-based indices, optional header starting with "i_".
std::vector<MultiIndex> read_indices(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open index file", path.string());
  std::vector<MultiIndex> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (lineno == 1 && line.rfind("i_", 0) == 0) continue;
    std::vector<Index> idx;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      std::size_t used = 0;
      Index v = 0;
      try {
        v = std::stoll(tok, &used);
      } catch (const std::exception&) {
        throw ParseError("bad index '" + tok + "' in " + path.string(), lineno);
      }
      if (tok.find_first_not_of(' ', used) != std::string::npos) {
        throw ParseError("bad index '" + tok + "' in " + path.string(), lineno);
      }
      idx.push_back(v);
    }
    out.emplace_back(std::move(idx));
  }
  return out;
}

int cmd_eval(const Args& a, std::ostream& os) {
  if (a.tt.empty()) throw ConfigError("--tt is required");
  if (a.indices.empty()) throw ConfigError("--indices is required");
  const TensorTrain tt = load_tt(a.tt);
  const std::vector<MultiIndex> idx = read_indices(a.indices);
  std::ostringstream text;
  for (Index k = 1; k <= tt.order(); ++k) text << "i_" << k << ",";
  text << "value\n";
  for (const MultiIndex& i : idx) {
    const double v = tt_eval(tt, i);
    for (Index x : i.values()) text << x << ",";
    text << number(v) << "\n";
  }
  if (a.out.empty()) {
    os << text.str();
  } else {
    std::ofstream f(a.out);
    if (!f) throw IoError("cannot write file", a.out);
    f << text.str();
  }
  return Ok;
}

int cmd_experiment(const Args& a, std::ostream&) {
  if (a.config.empty()) throw ConfigError("--config is required");
  if (a.report.empty()) throw ConfigError("--report is required");
  ExperimentConfig cfg = ExperimentConfig::load(a.config);
  if (a.seed_given) cfg.seeds = {a.seed};
  const ExperimentReport rep = run_experiment(cfg);
  write_report_csv(rep, a.report, a.timing);
  write_manifest(a.report, "experiment", cfg.to_json(), cfg.seeds.front());
  return Ok;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return Usage;
  if (dynamic_cast<const IoError*>(&e)) return Io;
  if (dynamic_cast<const ParseError*>(&e) || dynamic_cast<const UnsupportedVersionError*>(&e)) return Parse;
  if (dynamic_cast<const StageError*>(&e) || dynamic_cast<const FitError*>(&e) ||
      dynamic_cast<const DivergenceError*>(&e) || dynamic_cast<const ConditioningError*>(&e) ||
      dynamic_cast<const EvaluationError*>(&e) || dynamic_cast<const DegeneracyError*>(&e)) {
    return Stage;
  }
  return Other;
}

void report_error(std::ostream& err, const std::string& kind, const std::string& message, int code,
                  json extra = json::object()) {
  extra["error"] = kind;
  extra["message"] = message;
  extra["exit_code"] = code;
  err << extra.dump() << "\n";
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Args a;
  CLI::App app{"Tensor-train completion with Gaussian-process initialization", "ttgp"};
  app.footer(kFooter);
  app.require_subcommand(1);

  auto modes_opt = [&](CLI::App* c) {
    c->add_option("--modes", a.modes, "Mode sizes: comma list (5,5,5) or JSON file with \"mode_sizes\"");
  };
  auto seed_opt = [&](CLI::App* c) {
    c->add_option("--seed", a.seed, "Random seed")->each([&](const std::string&) { a.seed_given = true; });
  };
  auto gp_opts = [&](CLI::App* c) {
    c->add_option("--kernel", a.kernel, "GP kernel family")
        ->check(CLI::IsMember({"exp", "exponential", "matern32", "matern52", "rbf"}));
    c->add_option("--r0", a.r0, "Starting cross rank")->check(CLI::PositiveNumber);
    c->add_option("--rmax", a.r_max, "Largest cross rank")->check(CLI::PositiveNumber);
    c->add_option("--round-tol", a.round_tol, "Relative rounding tolerance")->check(CLI::PositiveNumber);
  };

  CLI::App* init = app.add_subcommand("init", "Observations CSV -> initial TT from the GP mean");
  init->add_option("--obs", a.obs, "Observations CSV (i_1,...,i_d,y)")->required();
  modes_opt(init);
  init->add_option("--out", a.out, "Output TT (.json for JSON, binary otherwise)")->required();
  init->add_option("--report", a.report, "Report JSON (default <out>.report.json)");
  init->add_option("--gp-model", a.gp_model, "Also save the fitted GP model here");
  gp_opts(init);
  seed_opt(init);

  CLI::App* comp = app.add_subcommand("complete", "Refine a TT on observations with ALS or SGD");
  comp->add_option("--obs", a.obs, "Observations CSV")->required();
  modes_opt(comp);
  comp->add_option("--out", a.out, "Output TT")->required();
  comp->add_option("--init", a.init, "Starting point")->check(CLI::IsMember({"random", "gp", "file"}));
  comp->add_option("--tt", a.tt, "Starting TT for --init file");
  comp->add_option("--method", a.method, "Optimizer")->check(CLI::IsMember({"als", "sgd"}));
  comp->add_option("--iters", a.iters, "ALS sweeps or SGD steps")->check(CLI::NonNegativeNumber);
  comp->add_option("--rank", a.rank, "Rank for --init random")->check(CLI::PositiveNumber);
  comp->add_option("--report", a.report, "Trace CSV");
  comp->add_flag("--timing", a.timing, "Write wall-clock seconds into the trace");
  gp_opts(comp);
  seed_opt(comp);

  CLI::App* cross = app.add_subcommand("cross", "TT-cross of a built-in function or a GP mean");
  cross->add_option("--function", a.function, "Built-in function")
      ->check(CLI::IsMember({"sum", "sine", "inverse", "gaussian"}));
  cross->add_option("--gp-model", a.gp_model, "GP model JSON written by init");
  modes_opt(cross);
  cross->add_option("--out", a.out, "Output TT")->required();
  cross->add_option("--rank", a.fixed_rank, "Fixed working rank (adaptive when omitted)")->check(CLI::PositiveNumber);
  cross->add_option("--report", a.report, "Report JSON");
  cross->add_option("--r0", a.r0, "Starting rank")->check(CLI::PositiveNumber);
  cross->add_option("--rmax", a.r_max, "Largest rank")->check(CLI::PositiveNumber);
  cross->add_option("--round-tol", a.round_tol, "Relative rounding tolerance")->check(CLI::PositiveNumber);
  seed_opt(cross);

  CLI::App* ev = app.add_subcommand("eval", "Evaluate a TT at listed indices");
  ev->add_option("--tt", a.tt, "TT file")->required();
  ev->add_option("--indices", a.indices, "CSV of 1-based indices")->required();
  ev->add_option("--out", a.out, "Output CSV (stdout when omitted)");

  CLI::App* exp = app.add_subcommand("experiment", "Random vs GP initialization over a config grid");
  exp->add_option("--config", a.config, "Experiment config JSON")->required();
  exp->add_option("--report", a.report, "Report CSV")->required();
  exp->add_flag("--timing", a.timing, "Write wall-clock seconds into the report");
  seed_opt(exp);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    report_error(err, "usage", e.what(), Usage);
    return Usage;
  }

  try {
    if (init->parsed()) return cmd_init(a, out);
    if (comp->parsed()) return cmd_complete(a, out);
    if (cross->parsed()) return cmd_cross(a, out);
    if (ev->parsed()) return cmd_eval(a, out);
    if (exp->parsed()) return cmd_experiment(a, out);
  } catch (const Error& e) {
    const int code = exit_code_for(e);
    json extra = json::object();
    if (const auto* io = dynamic_cast<const IoError*>(&e)) extra["path"] = io->path();
    if (const auto* st = dynamic_cast<const StageError*>(&e)) extra["stage"] = st->stage();
    report_error(err, e.kind(), e.what(), code, extra);
    return code;
  } catch (const std::exception& e) {
    report_error(err, "error", e.what(), Other);
    return Other;
  }
  return Other;
}

}  // namespace ttgp::cli

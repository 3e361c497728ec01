#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "ttgp/completion.hpp"
#include "ttgp/cross.hpp"
#include "ttgp/gp.hpp"
#include "ttgp/gp_init.hpp"
#include "ttgp/harness.hpp"
#include "ttgp/tt_io.hpp"

namespace py = pybind11;
using namespace ttgp;

namespace {

using IndexMatrix = Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic>;

py::array_t<double> full_array(const TensorTrain& tt) {
  const DenseTensor dense = tt_full(tt);
  std::vector<py::ssize_t> shape(tt.mode_sizes().begin(), tt.mode_sizes().end());
  std::vector<py::ssize_t> strides(shape.size());
  py::ssize_t step = sizeof(double);
  for (std::size_t k = 0; k < shape.size(); ++k) {
    strides[k] = step;
    step *= shape[k];
  }
  py::array_t<double> out(shape, strides);
  std::copy(dense.values().begin(), dense.values().end(), out.mutable_data());
  return out;
}

BlackBox python_black_box(Index d, py::function fn) {
  return BlackBox(d, [fn, d](std::span<const Index> idx, Index count, std::span<double> out) {
    py::gil_scoped_acquire gil;
    py::array_t<Index> arr({static_cast<py::ssize_t>(count), static_cast<py::ssize_t>(d)});
    std::copy(idx.begin(), idx.end(), arr.mutable_data());
    const auto values = fn(arr).cast<py::array_t<double, py::array::c_style | py::array::forcecast>>();
    if (values.size() != count) throw ShapeError("callback returned the wrong number of values");
    std::copy(values.data(), values.data() + count, out.begin());
  });
}

py::dict cross_dict(const CrossReport& r) {
  py::dict d;
  d["evals"] = r.evals;
  d["final_ranks"] = r.final_ranks;
  d["sweeps_used"] = r.sweeps_used;
  d["adapted"] = r.adapted;
  d["saturated"] = r.saturated;
  d["rank_reduced"] = r.rank_reduced;
  d["working_ranks"] = r.working_ranks;
  return d;
}

}  // namespace

PYBIND11_MODULE(_ttgp, m) {
  m.doc() = "Tensor-train completion with Gaussian-process initialization";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<DomainError>(m, "DomainError", base.ptr());
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<SizeError>(m, "SizeError", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<StageError>(m, "StageError", base.ptr());
  py::register_exception<DivergenceError>(m, "DivergenceError", base.ptr());
  py::register_exception<EvaluationError>(m, "EvaluationError", base.ptr());
  py::register_exception<DegeneracyError>(m, "DegeneracyError", base.ptr());
  py::register_exception<FitError>(m, "FitError", base.ptr());

  py::class_<TensorTrain>(m, "TensorTrain")
      .def_property_readonly("order", &TensorTrain::order)
      .def_property_readonly("mode_sizes", &TensorTrain::mode_sizes)
      .def_property_readonly("ranks", &TensorTrain::ranks)
      .def_property_readonly("max_rank", &TensorTrain::max_rank)
      .def_property_readonly("parameter_count", &TensorTrain::parameter_count)
      .def(
          "core",
          [](const TensorTrain& tt, Index k) {
            if (k < 0 || k >= tt.order()) throw DomainError("core index out of range");
            const Core& c = tt.core(k);
            py::array_t<double> out({c.r_left(), c.n(), c.r_right()},
                                    {sizeof(double), sizeof(double) * c.r_left(), sizeof(double) * c.r_left() * c.n()});
            std::copy(c.data().begin(), c.data().end(), out.mutable_data());
            return out;
          },
          py::arg("k"), "Core k as an (r_left, n, r_right) array.")
      .def(
          "__call__", [](const TensorTrain& tt, std::vector<Index> idx) { return tt_eval(tt, MultiIndex(std::move(idx))); },
          py::arg("index"), "Entry at a 1-based multi-index.")
      .def("full", &full_array, "Dense array (refuses tensors above 1e7 entries).")
      .def("norm", &tt_norm)
      .def("round", &tt_round, py::arg("tol"))
      .def("save", [](const TensorTrain& tt, const std::filesystem::path& p) { save_tt(p, tt); }, py::arg("path"))
      .def_static("load", &load_tt, py::arg("path"))
      .def_static(
          "random",
          [](std::vector<Index> modes, std::vector<Index> ranks, std::uint64_t seed) {
            return tt_random(modes, ranks, seed);
          },
          py::arg("mode_sizes"), py::arg("ranks"), py::arg("seed") = 0)
      .def("__eq__", [](const TensorTrain& a, const TensorTrain& b) { return a == b; })
      .def("__repr__", [](const TensorTrain& tt) {
        std::string s = "TensorTrain(ranks=[";
        for (std::size_t k = 0; k < tt.ranks().size(); ++k) s += (k ? ", " : "") + std::to_string(tt.ranks()[k]);
        return s + "])";
      });

  py::class_<ObservationSet>(m, "ObservationSet")
      .def(py::init([](std::vector<Index> modes, const IndexMatrix& idx, const Eigen::VectorXd& y) {
             return ObservationSet(std::move(modes), idx, y);
           }),
           py::arg("mode_sizes"), py::arg("indices"), py::arg("values"),
           "indices: (N, d) array of 1-based grid indices.")
      .def_property_readonly("mode_sizes", &ObservationSet::mode_sizes)
      .def_property_readonly("indices", &ObservationSet::index_matrix)
      .def_property_readonly("values", &ObservationSet::values)
      .def("__len__", &ObservationSet::size)
      .def("save", [](const ObservationSet& o, const std::filesystem::path& p) { save_observations(o, p); },
           py::arg("path"))
      .def_static(
          "load",
          [](const std::filesystem::path& p, std::vector<Index> modes) { return load_observations(p, modes); },
          py::arg("path"), py::arg("mode_sizes") = std::vector<Index>{});

  py::class_<GpModel>(m, "GpModel")
      .def("predict_mean", py::overload_cast<const Eigen::MatrixXd&>(&GpModel::predict_mean, py::const_),
           py::arg("points"))
      .def("predict_var", py::overload_cast<const Eigen::MatrixXd&>(&GpModel::predict_var, py::const_),
           py::arg("points"))
      .def_property_readonly("lengthscales", [](const GpModel& g) { return g.kernel().lengthscales; })
      .def_property_readonly("amplitude", [](const GpModel& g) { return g.kernel().amplitude; })
      .def_property_readonly("family", [](const GpModel& g) { return to_string(g.kernel().family); })
      .def_property_readonly("noise", &GpModel::noise)
      .def_property_readonly("log_marginal_likelihood", &GpModel::log_marginal_likelihood)
      .def("save", &GpModel::save, py::arg("path"))
      .def_static("load", &GpModel::load, py::arg("path"));

  m.def(
      "fit_gp",
      [](const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::string& kernel, std::uint64_t seed) {
        GpFitOptions o;
        o.family = parse_kernel_family(kernel);
        o.seed = seed;
        return fit_gp(x, y, o);
      },
      py::arg("x"), py::arg("y"), py::arg("kernel") = "rbf", py::arg("seed") = 0,
      "Fits kernel hyperparameters by maximizing the log marginal likelihood.");

  m.def(
      "cross",
      [](py::function fn, std::vector<Index> modes, std::optional<Index> rank, Index r0, Index r_max, double round_tol,
         std::uint64_t seed) {
        BlackBox f = python_black_box(static_cast<Index>(modes.size()), std::move(fn));
        CrossReport rep;
        if (rank) {
          std::vector<Index> ranks(modes.size() + 1, *rank);
          ranks.front() = ranks.back() = 1;
          CrossOptions o;
          o.seed = seed;
          rep = tt_cross(f, modes, ranks, o);
        } else {
          AdaptiveCrossOptions o;
          o.r0 = r0;
          o.r_max = r_max;
          o.round_tol = round_tol;
          o.cross.seed = seed;
          rep = tt_cross_adaptive(f, modes, o);
        }
        return py::make_tuple(rep.tt, cross_dict(rep));
      },
      py::arg("fn"), py::arg("mode_sizes"), py::arg("rank") = py::none(), py::arg("r0") = 2, py::arg("r_max") = 64,
      py::arg("round_tol") = 1e-6, py::arg("seed") = 0,
      "TT-cross of fn, which maps an (m, d) array of 1-based indices to m values. Adaptive unless rank is given.");

  m.def(
      "gp_init",
      [](const ObservationSet& obs, const std::string& kernel, Index r0, Index r_max, double round_tol,
         std::uint64_t seed) {
        InitOptions o;
        o.gp.family = parse_kernel_family(kernel);
        o.gp.seed = seed;
        o.cross.r0 = r0;
        o.cross.r_max = r_max;
        o.cross.round_tol = round_tol;
        o.cross.cross.seed = seed + 1;
        InitReport rep = gp_tt_init(obs, o);
        py::dict info = cross_dict(rep.cross);
        info["train_error"] = rep.train_error;
        return py::make_tuple(rep.tt0, rep.gp, info);
      },
      py::arg("obs"), py::arg("kernel") = "rbf", py::arg("r0") = 2, py::arg("r_max") = 64,
      py::arg("round_tol") = 1e-6, py::arg("seed") = 0,
      "GP fit on the observations followed by TT-cross of its mean. Returns (tt, gp, info).");

  m.def(
      "random_init", [](const ObservationSet& obs, Index rank, std::uint64_t seed) { return random_init(obs, rank, seed); },
      py::arg("obs"), py::arg("rank"), py::arg("seed") = 0);

  m.def(
      "complete",
      [](const TensorTrain& tt0, const ObservationSet& obs, const std::string& method, int iters,
         std::optional<double> ridge, std::optional<double> lr, std::uint64_t seed) {
        CompletionOptions o;
        o.method = parse_completion_method(method);
        o.n_iters = iters;
        o.als_ridge = ridge;
        o.sgd_lr = lr;
        o.seed = seed;
        const CompletionTrace t = complete(tt0, obs, o);
        return py::make_tuple(t.tt, t.iters, t.objective);
      },
      py::arg("tt"), py::arg("obs"), py::arg("method") = "als", py::arg("iters") = 100, py::arg("ridge") = py::none(),
      py::arg("lr") = py::none(), py::arg("seed") = 0,
      "Refines tt on the observations. Returns (tt, iterations, objective values).");

  m.def("objective", &objective, py::arg("tt"), py::arg("obs"));
  m.def("mse", &mse, py::arg("pred"), py::arg("truth"));
  m.def("mse_rel", &mse_rel, py::arg("pred"), py::arg("truth"));

  m.def(
      "sample_gp_function",
      [](const std::string& kernel, double lengthscale, Index d, Index features, std::uint64_t seed) {
        const SyntheticFunction f = sample_gp_function(parse_kernel_family(kernel), lengthscale, d, features, seed);
        return py::cpp_function([f](const Eigen::MatrixXd& x) { return f.evaluate(x); }, py::arg("x"));
      },
      py::arg("kernel"), py::arg("lengthscale"), py::arg("d"), py::arg("features") = 2048, py::arg("seed") = 0,
      "Random-feature GP prior sample; the returned callable maps an (m, d) array to m values.");

  m.def(
      "run_experiment",
      [](const std::string& config_json) {
        const ExperimentConfig cfg = ExperimentConfig::from_json(nlohmann::json::parse(config_json));
        const ExperimentReport rep = run_experiment(cfg);
        py::list rows;
        for (const ExperimentRow& r : rep.rows) {
          py::dict d;
          d["kernel"] = r.kernel;
          d["d"] = r.d;
          d["n"] = r.n;
          d["N"] = r.n_train;
          d["seed"] = r.seed;
          d["optimizer"] = r.optimizer;
          d["arm"] = r.arm;
          d["rank_max"] = r.rank_max;
          d["init_train_mse"] = r.init_train_mse;
          d["train_mse"] = r.train_mse;
          d["test_mse"] = r.test_mse;
          d["test_mse_rel"] = r.test_mse_rel;
          d["iters"] = r.iters;
          d["evals"] = r.evals;
          d["improvement"] = r.improvement;
          d["improvement_clamped"] = r.improvement_clamped;
          d["status"] = r.status;
          d["error"] = r.error;
          rows.append(d);
        }
        return rows;
      },
      py::arg("config_json"), "Runs an experiment from a JSON config string; returns one dict per arm and cell.");
}

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "eqq/asympt.hpp"
#include "eqq/errors.hpp"
#include "eqq/io.hpp"
#include "eqq/quantize.hpp"
#include "eqq/transport.hpp"

namespace py = pybind11;
using namespace eqq;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

PointCloud to_cloud(const Array& points, double total) {
  require(points.ndim() == 2, ErrorCode::InvalidArgument, "points must be an (n, d) array");
  const auto n = static_cast<std::size_t>(points.shape(0)), d = static_cast<std::size_t>(points.shape(1));
  std::vector<double> coords(points.data(), points.data() + n * d);
  PointCloud c(static_cast<int>(d), std::move(coords), total);
  c.check();
  return c;
}

Array to_array(const PointCloud& c) {
  Array out({static_cast<py::ssize_t>(c.size()), static_cast<py::ssize_t>(c.d)});
  std::copy(c.coords.begin(), c.coords.end(), out.mutable_data());
  return out;
}

std::vector<Method> to_methods(const std::vector<std::string>& names) {
  std::vector<Method> out;
  for (const auto& s : names) out.push_back(method_from_string(s));
  return out;
}

OptimizerConfig to_config(std::uint64_t seed, int restarts, int max_iters, double tol) {
  OptimizerConfig cfg;
  cfg.seed = seed;
  cfg.restarts = restarts;
  cfg.max_iters = max_iters;
  cfg.tol = tol;
  return cfg;
}

py::dict to_dict(const SweepRow& r) {
  py::dict d;
  d["n"] = r.n;
  d["method"] = r.method;
  d["p"] = r.p;
  d["d"] = r.d;
  d["error"] = r.error;
  d["scaled_error"] = r.scaled_error;
  d["seed"] = r.seed;
  d["restarts"] = r.restarts;
  d["runtime_ms"] = r.runtime_ms;
  d["failed"] = r.failed;
  d["resolution"] = r.resolution;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Empirical and classical quantization errors on grid measures";

  static py::exception<Error> error_type(m, "EqqError", PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error_type, (std::string(to_string(e.code())) + ": " + e.detail()).c_str());
    }
  });

  py::class_<GridDensity>(m, "Grid")
      .def_readonly("d", &GridDensity::d)
      .def_readonly("shape", &GridDensity::shape)
      .def_readonly("origin", &GridDensity::origin)
      .def_readonly("h", &GridDensity::h)
      .def_readonly("total", &GridDensity::total)
      .def_property_readonly("masses",
                             [](const GridDensity& g) {
                               Array a(static_cast<py::ssize_t>(g.masses.size()));
                               std::copy(g.masses.begin(), g.masses.end(), a.mutable_data());
                               return a.reshape(std::vector<py::ssize_t>(g.shape.begin(), g.shape.end()));
                             })
      .def("nonzero_count", &GridDensity::nonzero_count)
      .def("save", [](const GridDensity& g, const std::string& path) { write_grid(path, g); })
      .def_static("load", &read_grid);

  m.def(
      "grid_from_spec",
      [](const std::string& spec_json, int n, int resolution, int min_cells_per_point, bool truncate_ok) {
        return grid_for_points(parse_spec(spec_json), n, resolution, min_cells_per_point, truncate_ok);
      },
      py::arg("spec_json"), py::arg("n") = 1, py::arg("resolution") = 0, py::arg("min_cells_per_point") = 64,
      py::arg("truncate_ok") = false);

  py::class_<QuantizerResult>(m, "Result")
      .def_property_readonly("points", [](const QuantizerResult& r) { return to_array(r.cloud); })
      .def_readonly("cost", &QuantizerResult::cost)
      .def_readonly("error", &QuantizerResult::error)
      .def_property_readonly("method", [](const QuantizerResult& r) { return std::string(to_string(r.method)); })
      .def_readonly("trace", &QuantizerResult::trace)
      .def_readonly("seed", &QuantizerResult::seed_used)
      .def_readonly("restarts", &QuantizerResult::restarts)
      .def_readonly("iterations", &QuantizerResult::iterations)
      .def("to_json", [](const QuantizerResult& r, int n, double p) { return result_to_json(r, n, p); });

  m.def(
      "quantize",
      [](const GridDensity& g, int n, double p, const std::vector<std::string>& methods, std::uint64_t seed,
         int restarts, int max_iters, double tol, bool polish, double theta) {
        BestOptions best;
        best.polish = polish;
        best.theta = theta;
        py::gil_scoped_release release;
        return best_quantizer(g, n, p, to_methods(methods), to_config(seed, restarts, max_iters, tol), best);
      },
      py::arg("grid"), py::arg("n"), py::arg("p") = 2.0, py::arg("methods") = std::vector<std::string>{"lloyd"},
      py::arg("seed") = 0, py::arg("restarts") = 1, py::arg("max_iters") = 100, py::arg("tol") = 1e-6,
      py::arg("polish") = false, py::arg("theta") = 8.0);

  m.def(
      "capacity_cost",
      [](const GridDensity& g, const Array& pts, double p) { return solve_uniform_capacity(g, to_cloud(pts, g.total), p).cost; },
      py::arg("grid"), py::arg("points"), py::arg("p"));
  m.def(
      "free_cost",
      [](const GridDensity& g, const Array& pts, double p) { return nearest_assignment_cost(g, to_cloud(pts, g.total), p); },
      py::arg("grid"), py::arg("points"), py::arg("p"));
  m.def(
      "w1d_cost",
      [](const GridDensity& g, const Array& pts, double p, bool spread) {
        return w1d_exact(g, to_cloud(pts, g.total), p, spread ? CellModel::Spread : CellModel::Atom);
      },
      py::arg("grid"), py::arg("points"), py::arg("p"), py::arg("spread") = false);
  m.def(
      "wb_cost",
      [](const GridDensity& g, const Array& pts, double p, std::vector<double> lo, std::vector<double> hi) {
        return wb_boundary(g, to_cloud(pts, g.total), Box(std::move(lo), std::move(hi)), p);
      },
      py::arg("grid"), py::arg("points"), py::arg("p"), py::arg("lo"), py::arg("hi"));

  m.def("midpoint_1d", [](int n) { return to_array(midpoint_1d(n)); }, py::arg("n"));
  m.def(
      "pierce_greedy", [](const GridDensity& g, int n, double theta, double p) { return to_array(pierce_greedy(g, n, theta, p).cloud); },
      py::arg("grid"), py::arg("n"), py::arg("theta"), py::arg("p"));

  py::class_<SweepResult>(m, "Sweep")
      .def_property_readonly("rows",
                             [](const SweepResult& s) {
                               py::list rows;
                               for (const auto& r : s.rows) rows.append(to_dict(r));
                               return rows;
                             })
      .def_readonly("measure_id", &SweepResult::measure_id)
      .def_readonly("failure", &SweepResult::failure)
      .def("ok", &SweepResult::ok)
      .def("to_csv", &SweepResult::to_csv)
      .def_static("from_csv", &sweep_from_csv)
      .def("coefficient",
           [](const SweepResult& s, int d) {
             const auto c = coefficient_estimate(s, d);
             return py::make_tuple(c.value, c.n);
           })
      .def(
          "rate_fit",
          [](const SweepResult& s, double exclude_fraction) {
            const auto f = rate_fit(s, exclude_fraction);
            return py::make_tuple(f.slope, f.intercept, f.r2);
          },
          py::arg("exclude_fraction") = 0.2);

  m.def(
      "sweep",
      [](const std::string& spec_json, double p, const std::vector<int>& n_list, const std::vector<std::string>& methods,
         std::uint64_t seed, int restarts, int max_iters, double tol, int resolution) {
        SweepOptions opt;
        opt.methods = to_methods(methods);
        opt.cfg = to_config(seed, restarts, max_iters, tol);
        opt.resolution = resolution;
        const auto spec = parse_spec(spec_json);
        py::gil_scoped_release release;
        return sweep(spec, p, n_list, opt);
      },
      py::arg("spec_json"), py::arg("p"), py::arg("n_list"), py::arg("methods") = std::vector<std::string>{"lloyd"},
      py::arg("seed") = 0, py::arg("restarts") = 1, py::arg("max_iters") = 100, py::arg("tol") = 1e-6,
      py::arg("resolution") = 0);

  m.def(
      "bound_report",
      [](const GridDensity& g, double p, std::optional<double> q_lower, std::optional<double> q_upper, bool empirical) {
        return report_to_json(bound_report(g, p, g.d, q_lower, q_upper, empirical));
      },
      py::arg("grid"), py::arg("p"), py::arg("q_lower") = py::none(), py::arg("q_upper") = py::none(),
      py::arg("empirical") = true);

  m.def("distant_bound", &distant_bound, py::arg("n"), py::arg("r"), py::arg("beta"), py::arg("p"));
}

#include "eqq/cli.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "eqq/asympt.hpp"
#include "eqq/errors.hpp"
#include "eqq/io.hpp"

namespace eqq::cli {

namespace {

const std::map<std::string, Command>& command_names() {
  static const std::map<std::string, Command> m{{"grid", Command::Grid},   {"quantize", Command::Quantize},
                                                {"error", Command::Error}, {"sweep", Command::Sweep},
                                                {"coeff", Command::Coeff}, {"report", Command::Report}};
  return m;
}

// Dimension from the flag, else from the input file when it can be read.
std::optional<int> known_dim(const RunConfig& c) {
  if (c.d > 0) return c.d;
  try {
    if (!c.spec_path.empty()) return parse_spec(read_text(c.spec_path)).d;
    if (!c.grid_path.empty()) return nlohmann::json::parse(read_text(c.grid_path)).at("d").get<int>();
  } catch (const std::exception&) {
  }
  return std::nullopt;
}

std::optional<int> file_dim(const RunConfig& c) {
  RunConfig copy = c;
  copy.d = 0;
  return known_dim(copy);
}

std::vector<Method> parse_methods(const std::vector<std::string>& names) {
  std::vector<Method> out;
  for (const auto& s : names) out.push_back(method_from_string(s));
  return out;
}

HexRegion parse_region(const std::string& s) {
  const auto colon = s.find(':');
  const std::string kind = s.substr(0, colon);
  std::vector<double> v;
  if (colon != std::string::npos) {
    std::string rest = s.substr(colon + 1);
    std::replace(rest.begin(), rest.end(), ',', ' ');
    std::istringstream in(rest);
    for (double x; in >> x;) v.push_back(x);
    require(in.eof(), ErrorCode::InvalidArgument, "region parameters must be numbers");
  }
  if (kind == "square") {
    if (v.empty()) return HexRegion::unit_square();
    require(v.size() == 4, ErrorCode::InvalidArgument, "square region needs lo_x,lo_y,hi_x,hi_y");
    HexRegion r;
    r.square = Box({v[0], v[1]}, {v[2], v[3]});
    return r;
  }
  if (kind == "disk") {
    if (v.empty()) return HexRegion::disk(0.5, 0.5, 0.5);
    require(v.size() == 3, ErrorCode::InvalidArgument, "disk region needs cx,cy,radius");
    return HexRegion::disk(v[0], v[1], v[2]);
  }
  fail(ErrorCode::InvalidArgument, "unknown region: " + s);
}

InitKind parse_init(const std::string& s) {
  if (s == "rho") return InitKind::RhoSample;
  if (s == "grid") return InitKind::GridJitter;
  fail(ErrorCode::InvalidArgument, "init must be rho or grid");
}

CellModel parse_cell_model(const std::string& s) {
  if (s == "atom") return CellModel::Atom;
  if (s == "spread") return CellModel::Spread;
  fail(ErrorCode::InvalidArgument, "cell model must be atom or spread");
}

template <class F>
void collect(std::vector<std::string>& out, F&& f) {
  try {
    f();
  } catch (const Error& e) {
    out.push_back(e.detail());
  }
}

OptimizerConfig optimizer(const RunConfig& c) {
  OptimizerConfig cfg;
  cfg.max_iters = c.max_iters;
  cfg.tol = c.tol;
  cfg.restarts = c.restarts;
  cfg.seed = c.seed;
  cfg.init = parse_init(c.init);
  cfg.solver.max_cells = c.max_cells;
  return cfg;
}

BestOptions best_options(const RunConfig& c) {
  BestOptions b;
  b.polish = c.polish;
  b.theta = c.theta;
  b.region = parse_region(c.region);
  b.hex_margin = c.hex_margin;
  return b;
}

SweepOptions sweep_options(const RunConfig& c) {
  SweepOptions o;
  o.methods = parse_methods(c.methods);
  o.cfg = optimizer(c);
  o.best = best_options(c);
  o.resolution = c.resolution;
  o.min_cells_per_point = c.min_cells_per_point;
  o.record_runtime = c.record_runtime;
  o.truncate_ok = c.truncate_ok;
  return o;
}

GridDensity load_grid(const RunConfig& c, int n) {
  if (!c.grid_path.empty()) return read_grid(c.grid_path);
  const auto spec = parse_spec(read_text(c.spec_path));
  return grid_for_points(spec, std::max(n, 1), c.resolution, c.min_cells_per_point, c.truncate_ok);
}

void emit(const RunConfig& c, std::ostream& out, const std::string& text) {
  if (c.output_path.empty())
    out << text;
  else
    write_text_atomic(c.output_path, text);
}

void check_dim(const RunConfig& c, int d) {
  require(c.d <= 0 || c.d == d, ErrorCode::DimensionMismatch,
          "--d " + std::to_string(c.d) + " disagrees with the input dimension " + std::to_string(d));
}

void run_grid(const RunConfig& c) {
  const auto spec = parse_spec(read_text(c.spec_path));
  check_dim(c, spec.d);
  write_grid(c.output_path, grid_for_points(spec, 1, c.resolution, c.min_cells_per_point, c.truncate_ok));
}

void run_quantize(const RunConfig& c, std::ostream& out) {
  const auto grid = load_grid(c, c.n);
  check_dim(c, grid.d);
  const auto methods = parse_methods(c.methods);
  const auto r = best_quantizer(grid, c.n, c.p, methods, optimizer(c), best_options(c));
  const std::string result = result_to_json(r, c.n, c.p);
  if (!c.output_path.empty()) write_text_atomic(c.output_path, cloud_to_csv(r.cloud));
  if (!c.result_path.empty()) write_text_atomic(c.result_path, result);
  if (c.output_path.empty() && c.result_path.empty()) out << result;
}

void run_error(const RunConfig& c, std::ostream& out) {
  const std::string csv = read_text(c.cloud_path);
  // the cloud size decides an automatic grid, so read it with a unit total first
  const int n = static_cast<int>(cloud_from_csv(csv, 1.0).size());
  const auto grid = load_grid(c, n);
  check_dim(c, grid.d);
  const auto cloud = cloud_from_csv(csv, grid.total);
  require(cloud.d == grid.d, ErrorCode::DimensionMismatch, "cloud and grid dimensions differ");
  const CellModel model = parse_cell_model(c.cell_model);
  double cost = 0.0;
  if (c.mode == "capacity") {
    SolverOptions solver;
    solver.max_cells = c.max_cells;
    const auto t = solve_uniform_capacity(grid, cloud, c.p, solver);
    cost = model == CellModel::Atom ? t.cost : spread_cost(grid, cloud, t.plan, c.p);
    if (!c.plan_path.empty()) write_text_atomic(c.plan_path, plan_to_csv(t.plan));
  } else if (c.mode == "free") {
    cost = model == CellModel::Atom ? nearest_assignment_cost(grid, cloud, c.p)
                                    : evaluate_classical(grid, cloud, c.p).error;
  } else if (c.mode == "w1d") {
    cost = w1d_exact(grid, cloud, c.p, model);
  } else {
    const std::size_t d = static_cast<std::size_t>(grid.d);
    require(c.omega.size() == 2 * d, ErrorCode::DimensionMismatch, "--omega needs 2d numbers");
    const Box omega({c.omega.begin(), c.omega.begin() + static_cast<std::ptrdiff_t>(d)},
                    {c.omega.begin() + static_cast<std::ptrdiff_t>(d), c.omega.end()});
    cost = wb_boundary(grid, cloud, omega, c.p);
  }
  emit(c, out, cost_to_json(c.p, cost, c.mode, c.mode == "wb" ? "atom" : c.cell_model));
}

SweepResult sweep_from_config(const RunConfig& c) {
  const auto opt = sweep_options(c);
  if (!c.grid_path.empty()) {
    const auto grid = read_grid(c.grid_path);
    check_dim(c, grid.d);
    return sweep_grid(grid, "grid_d" + std::to_string(grid.d), c.p, c.n_list, opt);
  }
  const auto spec = parse_spec(read_text(c.spec_path));
  check_dim(c, spec.d);
  return sweep(spec, c.p, c.n_list, opt);
}

// Sweeps keep going past failed rows; the first failure decides the exit code.
[[noreturn]] void fail_sweep(const SweepResult& s) {
  fail(ErrorCode::SolverLimitExceeded, "sweep rows failed: " + s.failure);
}

void run_sweep(const RunConfig& c, std::ostream& out) {
  const auto s = sweep_from_config(c);
  emit(c, out, s.to_csv());
  if (!s.ok()) fail_sweep(s);
}

void run_coeff(const RunConfig& c, std::ostream& out) {
  SweepResult s;
  if (!c.sweep_path.empty()) {
    s = sweep_from_csv(read_text(c.sweep_path));
  } else {
    s = sweep_from_config(c);
    if (!s.ok()) fail_sweep(s);
  }
  int d = c.d;
  if (d <= 0)
    for (const auto& r : s.rows) d = r.d;
  require(d > 0, ErrorCode::EmptySweep, "sweep has no rows");
  emit(c, out, coefficient_to_json(coefficient_estimate(s, d), d, s.rows.size()));
}

void run_report(const RunConfig& c, std::ostream& out) {
  const auto grid = load_grid(c, 1);
  check_dim(c, grid.d);
  emit(c, out, report_to_json(bound_report(grid, c.p, grid.d, c.q_lower, c.q_upper, c.empirical)));
}

int report_error(std::ostream& err, std::string_view code, const nlohmann::json& detail, int status) {
  err << nlohmann::json{{"error", std::string(code)}, {"detail", detail}}.dump() << "\n";
  return status;
}

void build_app(CLI::App& app, RunConfig& c, std::string& command) {
  app.add_option("command", command, "grid | quantize | error | sweep | coeff | report")->required();
  app.add_option("--spec", c.spec_path, "measure spec JSON");
  app.add_option("--grid", c.grid_path, "grid header JSON");
  app.add_option("--cloud", c.cloud_path, "point cloud CSV");
  app.add_option("--sweep", c.sweep_path, "sweep CSV");
  app.add_option("--out,-o", c.output_path, "main output file (stdout if omitted)");
  app.add_option("--result", c.result_path, "quantize: result JSON");
  app.add_option("--plan", c.plan_path, "error --mode capacity: plan CSV");
  app.add_option("--p", c.p, "exponent p >= 1");
  app.add_option("--d", c.d, "dimension check");
  app.add_option("--n", c.n, "number of points");
  app.add_option("--n-list", c.n_list, "increasing point counts")->delimiter(',');
  app.add_option("--method", c.methods, "methods to run, best kept")->delimiter(',');
  app.add_option("--seed", c.seed);
  app.add_option("--restarts", c.restarts);
  app.add_option("--max-iters", c.max_iters);
  app.add_option("--tol", c.tol);
  app.add_option("--init", c.init, "rho | grid");
  app.add_option("--resolution", c.resolution, "cells along the longest axis (0: automatic)");
  app.add_option("--min-cells-per-point", c.min_cells_per_point);
  app.add_option("--max-cells", c.max_cells, "capacity solver cell limit");
  app.add_option("--omega", c.omega, "wb box lo_1..lo_d,hi_1..hi_d")->delimiter(',');
  app.add_option("--mode", c.mode, "capacity | free | w1d | wb");
  app.add_option("--cell-model", c.cell_model, "atom | spread");
  app.add_option("--theta", c.theta, "Pierce moment order");
  app.add_flag("--polish", c.polish, "capacity Lloyd after each construction");
  app.add_option("--region", c.region, "hex region: square[:lx,ly,hx,hy] | disk[:cx,cy,r]");
  app.add_option("--hex-margin", c.hex_margin);
  app.add_flag("--truncate-ok", c.truncate_ok);
  app.add_flag("--record-runtime", c.record_runtime);
  app.add_option("--q-lower", c.q_lower);
  app.add_option("--q-upper", c.q_upper);
  app.add_flag("--empirical,!--no-empirical", c.empirical, "include the empirical functionals");
}

}  // namespace

std::string command_name(Command c) {
  for (const auto& [name, cmd] : command_names())
    if (cmd == c) return name;
  return "unknown";
}

std::vector<std::string> validate(const RunConfig& c) {
  std::vector<std::string> v;
  const bool has_spec = !c.spec_path.empty(), has_grid = !c.grid_path.empty();
  const auto d = known_dim(c);
  const auto fd = file_dim(c);
  if (c.d > 0 && fd && *fd != c.d) v.push_back("--d disagrees with the input dimension");
  if (!(c.p >= 1.0) || !std::isfinite(c.p)) v.push_back("p must be a finite number >= 1");
  if (c.d < 0) v.push_back("d must be positive");

  auto needs_measure = [&] {
    if (has_spec == has_grid) v.push_back("exactly one of --spec and --grid is required");
  };
  auto needs_optimizer = [&] {
    if (c.restarts < 1) v.push_back("restarts must be >= 1");
    if (c.max_iters < 1) v.push_back("max_iters must be >= 1");
    if (!(c.tol >= 0.0)) v.push_back("tol must be >= 0");
    if (!(c.theta > 0.0)) v.push_back("theta must be positive");
    if (!(c.hex_margin >= 0.0)) v.push_back("hex_margin must be >= 0");
    if (c.min_cells_per_point < 1) v.push_back("min_cells_per_point must be >= 1");
    collect(v, [&] { parse_init(c.init); });
    collect(v, [&] { parse_region(c.region); });
    if (c.methods.empty()) v.push_back("at least one method is required");
    std::vector<Method> ms;
    for (const auto& name : c.methods) collect(v, [&] { ms.push_back(method_from_string(name)); });
    const bool classical = std::find(ms.begin(), ms.end(), Method::LloydClassical) != ms.end();
    if (classical && ms.size() > 1) v.push_back("lloyd_classical cannot be combined with other methods");
    if (d) {
      for (Method m : ms) {
        if (m == Method::Hex2d && *d != 2) v.push_back("hex_2d needs d = 2, got d = " + std::to_string(*d));
        if ((m == Method::Midpoint1d || m == Method::Chunk1d) && *d != 1)
          v.push_back(std::string(to_string(m)) + " needs d = 1, got d = " + std::to_string(*d));
      }
    }
  };
  auto needs_n_list = [&] {
    if (c.n_list.empty()) v.push_back("--n-list is required");
    for (std::size_t i = 0; i < c.n_list.size(); ++i) {
      if (c.n_list[i] < 1) v.push_back("n values must be >= 1");
      if (i > 0 && c.n_list[i] <= c.n_list[i - 1]) v.push_back("n list must be strictly increasing");
    }
  };

  switch (c.command) {
    case Command::Grid:
      if (!has_spec) v.push_back("grid needs --spec");
      if (has_grid) v.push_back("grid does not read --grid");
      if (c.resolution < 1) v.push_back("grid needs --resolution >= 1");
      if (c.output_path.empty()) v.push_back("grid needs --out");
      break;
    case Command::Quantize:
      needs_measure();
      if (c.n < 1) v.push_back("quantize needs --n >= 1");
      needs_optimizer();
      break;
    case Command::Error:
      needs_measure();
      if (c.cloud_path.empty()) v.push_back("error needs --cloud");
      if (c.mode != "capacity" && c.mode != "free" && c.mode != "w1d" && c.mode != "wb")
        v.push_back("mode must be capacity, free, w1d or wb");
      collect(v, [&] { parse_cell_model(c.cell_model); });
      if (c.mode == "w1d" && d && *d != 1) v.push_back("w1d mode needs d = 1");
      if (c.mode == "wb") {
        if (c.omega.empty() || c.omega.size() % 2 != 0)
          v.push_back("wb mode needs --omega with lo and hi corners");
        else if (d && c.omega.size() != 2 * static_cast<std::size_t>(*d))
          v.push_back("--omega needs 2d numbers");
        const std::size_t h = c.omega.size() / 2;
        for (std::size_t k = 0; k < h && c.omega.size() % 2 == 0; ++k)
          if (!(c.omega[k] < c.omega[h + k])) v.push_back("--omega lo must be below hi on every axis");
      }
      if (!c.plan_path.empty() && c.mode != "capacity") v.push_back("--plan needs mode capacity");
      break;
    case Command::Sweep:
      needs_measure();
      needs_n_list();
      needs_optimizer();
      break;
    case Command::Coeff:
      if (c.sweep_path.empty()) {
        needs_measure();
        needs_n_list();
        needs_optimizer();
      } else if (has_spec || has_grid) {
        v.push_back("coeff reads either --sweep or a measure, not both");
      }
      break;
    case Command::Report:
      needs_measure();
      if (has_spec && c.resolution < 1) v.push_back("report on a spec needs --resolution >= 1");
      if (c.empirical && d && c.p >= *d)
        v.push_back("empirical functionals need p < d (p = " + format_double(c.p) + ", d = " + std::to_string(*d) +
                    ")");
      break;
  }
  return v;
}

RunConfig parse_args(int argc, const char* const* argv) {
  RunConfig c;
  std::string command;
  CLI::App app{"eqq"};
  build_app(app, c, command);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    fail(ErrorCode::InvalidArgument, e.what());
  }
  const auto it = command_names().find(command);
  require(it != command_names().end(), ErrorCode::InvalidArgument, "unknown command: " + command);
  c.command = it->second;
  return c;
}

int run(const RunConfig& config, std::ostream& out, std::ostream& err) {
  if (const auto v = validate(config); !v.empty())
    return report_error(err, to_string(ErrorCode::InvalidArgument), v, 2);
  try {
    switch (config.command) {
      case Command::Grid: run_grid(config); break;
      case Command::Quantize: run_quantize(config, out); break;
      case Command::Error: run_error(config, out); break;
      case Command::Sweep: run_sweep(config, out); break;
      case Command::Coeff: run_coeff(config, out); break;
      case Command::Report: run_report(config, out); break;
    }
  } catch (const Error& e) {
    return report_error(err, to_string(e.code()), e.detail(), is_validation_error(e.code()) ? 2 : 3);
  } catch (const std::exception& e) {
    return report_error(err, to_string(ErrorCode::Internal), e.what(), 3);
  }
  return 0;
}

int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "-h" || a == "--help") {
      RunConfig c;
      std::string command;
      CLI::App app{"eqq"};
      build_app(app, c, command);
      out << app.help();
      return 0;
    }
  }
  RunConfig config;
  try {
    config = parse_args(argc, argv);
  } catch (const Error& e) {
    return report_error(err, to_string(e.code()), e.detail(), 2);
  }
  return run(config, out, err);
}

}  // namespace eqq::cli

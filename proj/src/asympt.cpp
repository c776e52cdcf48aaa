#include "eqq/asympt.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <memory>

#include "eqq/errors.hpp"

namespace eqq {

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

int longest_axis(const GridDensity& g) { return *std::max_element(g.shape.begin(), g.shape.end()); }

double longest_side(const Box& b) {
  double s = 0.0;
  for (int k = 0; k < b.dim(); ++k) s = std::max(s, b.hi[k] - b.lo[k]);
  return s;
}

SweepRow run_row(const GridDensity& grid, double p, int n, const SweepOptions& options) {
  SweepRow row;
  row.n = n;
  row.p = p;
  row.d = grid.d;
  row.seed = options.cfg.seed;
  row.resolution = longest_axis(grid);
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = best_quantizer(grid, n, p, options.methods, options.cfg, options.best);
  const auto t1 = std::chrono::steady_clock::now();
  row.method = std::string(to_string(r.method));
  row.error = r.error;
  row.scaled_error = std::pow(static_cast<double>(n), 1.0 / grid.d) * r.error;
  row.restarts = r.restarts;
  if (options.record_runtime) row.runtime_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  return row;
}

void check_n_list(std::span<const int> n_list, double p) {
  require(!n_list.empty(), ErrorCode::InvalidArgument, "n list is empty");
  require(p >= 1.0, ErrorCode::InvalidArgument, "p must be >= 1");
  for (std::size_t i = 0; i < n_list.size(); ++i) {
    require(n_list[i] >= 1, ErrorCode::InvalidArgument, "n must be >= 1");
    require(i == 0 || n_list[i] > n_list[i - 1], ErrorCode::InvalidArgument, "n list must be increasing");
  }
}

void record(SweepResult& out, SweepRow row) {
  out.grid_resolution.push_back(row.resolution);
  out.rows.push_back(std::move(row));
}

void record_failure(SweepResult& out, int n, double p, int d, int resolution, const SweepOptions& options,
                    const std::string& what) {
  SweepRow row;
  row.n = n;
  row.p = p;
  row.d = d;
  row.method = "failed";
  row.error = row.scaled_error = std::nan("");
  row.seed = options.cfg.seed;
  row.restarts = options.cfg.restarts;
  row.failed = true;
  row.resolution = resolution;
  record(out, row);
  if (out.failure.empty()) out.failure = what;
}

}  // namespace

std::string SweepResult::to_csv() const {
  std::string out = "n,method,p,d,error,scaled_error,seed,restarts,runtime_ms\n";
  for (const auto& r : rows) {
    out += std::to_string(r.n) + "," + r.method + "," + fmt17(r.p) + "," + std::to_string(r.d) + "," +
           fmt17(r.error) + "," + fmt17(r.scaled_error) + "," + std::to_string(r.seed) + "," +
           std::to_string(r.restarts) + "," + fmt17(r.runtime_ms) + "\n";
  }
  return out;
}

std::string measure_id(const MeasureSpec& spec) {
  static const std::map<MeasureKind, std::string> names{
      {MeasureKind::UniformCube, "uniform_cube"}, {MeasureKind::UniformSet, "uniform_set"},
      {MeasureKind::Gaussian, "gaussian"},        {MeasureKind::Mixture, "mixture"},
      {MeasureKind::TwoBlocks, "two_blocks"},     {MeasureKind::SegmentSingular, "segment"}};
  return names.at(spec.kind) + "_d" + std::to_string(spec.d);
}

SweepResult sweep_grid(const GridDensity& grid, const std::string& id, double p, std::span<const int> n_list,
                       const SweepOptions& options) {
  check_n_list(n_list, p);
  SweepResult out;
  out.measure_id = id;
  for (int n : n_list) {
    try {
      record(out, run_row(grid, p, n, options));
    } catch (const Error& e) {
      record_failure(out, n, p, grid.d, longest_axis(grid), options, e.what());
    }
  }
  return out;
}

GridDensity grid_for_points(const MeasureSpec& spec, int n, int resolution, int min_cells_per_point,
                            bool truncate_ok, int* chosen) {
  spec.validate();
  require(n >= 1, ErrorCode::InvalidArgument, "n must be >= 1");
  require(min_cells_per_point >= 1, ErrorCode::InvalidArgument, "min_cells_per_point must be >= 1");
  const double side = longest_side(spec.natural_box());
  int res = resolution;
  if (res > 0) {
    if (chosen) *chosen = res;
    return build_grid_spacing(spec, side / res, truncate_ok);
  }
  const double want = static_cast<double>(min_cells_per_point) * n;
  res = std::max(1, static_cast<int>(std::ceil(std::pow(want, 1.0 / spec.d) - 1e-9)));
  while (true) {
    auto grid = build_grid_spacing(spec, side / res, truncate_ok);
    const double have = static_cast<double>(grid.nonzero_count());
    if (have >= want) {
      if (chosen) *chosen = res;
      return grid;
    }
    res = std::max(res + 1, static_cast<int>(std::ceil(res * std::pow(want / have, 1.0 / spec.d) * 1.01)));
  }
}

SweepResult sweep(const MeasureSpec& spec, double p, std::span<const int> n_list, const SweepOptions& options) {
  spec.validate();
  check_n_list(n_list, p);
  require(options.min_cells_per_point >= 1, ErrorCode::InvalidArgument, "min_cells_per_point must be >= 1");
  SweepResult out;
  out.measure_id = measure_id(spec);
  std::unique_ptr<GridDensity> grid;
  int grid_res = 0;
  for (int n : n_list) {
    int res = options.resolution;
    try {
      const double want = static_cast<double>(options.min_cells_per_point) * n;
      const bool reuse = grid && (res > 0 ? grid_res == res : grid->nonzero_count() >= want);
      if (reuse) {
        res = grid_res;
      } else {
        grid = std::make_unique<GridDensity>(
            grid_for_points(spec, n, res, options.min_cells_per_point, options.truncate_ok, &res));
        grid_res = res;
      }
      auto row = run_row(*grid, p, n, options);
      row.resolution = res;
      record(out, row);
    } catch (const Error& e) {
      record_failure(out, n, p, spec.d, res, options, e.what());
    }
  }
  return out;
}

CoefficientEstimate coefficient_estimate(const SweepResult& sweep, int d) {
  CoefficientEstimate best;
  bool have = false;
  for (const auto& r : sweep.rows) {
    if (r.failed) continue;
    require(r.d == d, ErrorCode::DimensionMismatch, "sweep row dimension differs from d");
    if (!have || r.scaled_error < best.value) {
      best = {r.scaled_error, r.n};
      have = true;
    }
  }
  require(have, ErrorCode::EmptySweep, "sweep has no usable rows");
  return best;
}

namespace {

RateFit fit(const SweepResult& sweep, double exclude_fraction, auto response) {
  require(exclude_fraction >= 0.0 && exclude_fraction < 1.0, ErrorCode::InvalidArgument,
          "exclude fraction must lie in [0, 1)");
  std::vector<const SweepRow*> rows;
  for (const auto& r : sweep.rows)
    if (!r.failed && r.error > 0.0 && std::isfinite(r.error)) rows.push_back(&r);
  std::sort(rows.begin(), rows.end(), [](const SweepRow* a, const SweepRow* b) { return a->n < b->n; });
  require(rows.size() >= 3, ErrorCode::DegenerateFit, "rate fit needs at least three rows with positive error");
  const std::size_t drop =
      std::min(static_cast<std::size_t>(std::floor(exclude_fraction * static_cast<double>(rows.size()))),
               rows.size() - 3);
  rows.erase(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(drop));

  const double k = static_cast<double>(rows.size());
  double sx = 0, sy = 0;
  for (const auto* r : rows) {
    sx += std::log(static_cast<double>(r->n));
    sy += std::log(response(*r));
  }
  const double mx = sx / k, my = sy / k;
  double sxx = 0, sxy = 0, syy = 0;
  for (const auto* r : rows) {
    const double x = std::log(static_cast<double>(r->n)) - mx, y = std::log(response(*r)) - my;
    sxx += x * x;
    sxy += x * y;
    syy += y * y;
  }
  require(sxx > 0.0, ErrorCode::DegenerateFit, "all n values are equal");
  bool all_equal = true;
  for (const auto* r : rows) all_equal = all_equal && r->error == rows.front()->error;
  require(!all_equal, ErrorCode::DegenerateFit, "all errors are equal");
  RateFit out;
  out.slope = sxy / sxx;
  out.intercept = my - out.slope * mx;
  out.r2 = syy > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
  out.first_n = rows.front()->n;
  out.last_n = rows.back()->n;
  return out;
}

}  // namespace

RateFit rate_fit(const SweepResult& sweep, double exclude_fraction) {
  return fit(sweep, exclude_fraction, [](const SweepRow& r) { return r.error; });
}

RateFit rate_fit_log(const SweepResult& sweep, int d, double exclude_fraction) {
  require(d >= 1, ErrorCode::InvalidArgument, "d must be >= 1");
  return fit(sweep, exclude_fraction, [d](const SweepRow& r) {
    return r.error / std::pow(1.0 + std::log(static_cast<double>(r.n)), 1.0 / d);
  });
}

BoundReport bound_report(const GridDensity& grid, double p, int d, std::optional<double> q_lower,
                         std::optional<double> q_upper, bool empirical) {
  require(p >= 1.0, ErrorCode::InvalidArgument, "p must be >= 1");
  require(grid.d == d, ErrorCode::DimensionMismatch, "grid dimension differs from d");
  BoundReport rep;
  rep.p = p;
  rep.d = d;
  rep.q_lower_input = q_lower;
  rep.q_upper_input = q_upper;
  rep.zador_functional = density_functional(grid, d / (d + p), false);
  if (q_lower) rep.rhs_zador = *q_lower * std::pow(rep.zador_functional, (d + p) / (d * p));
  if (empirical) {
    require(p < d, ErrorCode::ExponentOutOfRange, "empirical functionals need p < d");
    rep.empirical_functional_full = density_functional(grid, (d - p) / d, false);
    rep.empirical_functional_excl = density_functional(grid, (d - p) / d, true);
    if (q_lower) rep.rhs_L = *q_lower * std::pow(*rep.empirical_functional_excl, 1.0 / p);
    if (q_upper) rep.rhs_U = *q_upper * std::pow(*rep.empirical_functional_full, 1.0 / p);
  }
  return rep;
}

double distant_bound(int n, double r, double beta, double p) {
  require(n >= 1, ErrorCode::InvalidArgument, "n must be >= 1");
  require(beta > 0.0 && beta < 1.0, ErrorCode::InvalidArgument, "beta must lie in (0, 1)");
  require(r > 0.0, ErrorCode::InvalidArgument, "r must be positive");
  require(p >= 1.0, ErrorCode::InvalidArgument, "p must be >= 1");
  const double x = n * beta;
  const double tau = x - std::floor(x);
  return 0.5 * r * std::pow(std::min(tau, 1.0 - tau) / n, 1.0 / p);
}

}  // namespace eqq

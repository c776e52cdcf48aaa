#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eqq/measure.hpp"
#include "eqq/quantize.hpp"

namespace eqq {

struct SweepRow {
  int n = 0;
  std::string method;
  double p = 0.0;
  int d = 0;
  double error = 0.0;
  double scaled_error = 0.0;  // n^(1/d) * error
  std::uint64_t seed = 0;
  int restarts = 0;
  double runtime_ms = 0.0;
  bool failed = false;
  int resolution = 0;  // cells per axis of the grid used for this row
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::string measure_id;
  std::vector<int> grid_resolution;  // one entry per row
  std::string failure;               // first failure message, if any

  bool ok() const { return failure.empty(); }
  std::string to_csv() const;
};

struct SweepOptions {
  std::vector<Method> methods{Method::LloydCapacity};
  OptimizerConfig cfg;
  BestOptions best;
  // Cells along the longest axis of the measure's box; 0 picks the coarsest
  // grid with at least min_cells_per_point nonzero cells per point.
  int resolution = 0;
  int min_cells_per_point = 64;
  bool record_runtime = false;  // runtime_ms stays 0 unless set
  bool truncate_ok = false;
};

std::string measure_id(const MeasureSpec& spec);

// Cubic grid over spec.natural_box() with `resolution` cells along the longest
// axis, or with resolution <= 0 the coarsest one holding at least
// min_cells_per_point * n nonzero cells. `chosen` receives the resolution.
GridDensity grid_for_points(const MeasureSpec& spec, int n, int resolution, int min_cells_per_point,
                            bool truncate_ok, int* chosen = nullptr);

SweepResult sweep(const MeasureSpec& spec, double p, std::span<const int> n_list, const SweepOptions& options);

// Same, on a prebuilt grid (resolution fields record the grid's largest axis).
SweepResult sweep_grid(const GridDensity& grid, const std::string& id, double p, std::span<const int> n_list,
                       const SweepOptions& options);

struct CoefficientEstimate {
  double value = 0.0;
  int n = 0;
};

CoefficientEstimate coefficient_estimate(const SweepResult& sweep, int d);

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  int first_n = 0;  // fit window
  int last_n = 0;
};

// Least squares of log(error) on log(n). The smallest `exclude_fraction` of
// the n values are dropped while at least three rows remain.
RateFit rate_fit(const SweepResult& sweep, double exclude_fraction = 0.2);

// Same with error / (1 + log n)^(1/d) as the response.
RateFit rate_fit_log(const SweepResult& sweep, int d, double exclude_fraction = 0.2);

struct BoundReport {
  double p = 0.0;
  int d = 0;
  double zador_functional = 0.0;
  std::optional<double> empirical_functional_full;
  std::optional<double> empirical_functional_excl;
  std::optional<double> q_lower_input, q_upper_input;
  std::optional<double> rhs_L, rhs_U, rhs_zador;
};

BoundReport bound_report(const GridDensity& grid, double p, int d, std::optional<double> q_lower = {},
                         std::optional<double> q_upper = {}, bool empirical = true);

double distant_bound(int n, double r, double beta, double p);

}  // namespace eqq

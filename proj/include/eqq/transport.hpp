#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "eqq/measure.hpp"

namespace eqq {

// n sites in R^d, each carrying weight_each = total / n.
struct PointCloud {
  int d = 0;
  std::vector<double> coords;  // row-major, n x d
  double weight_each = 0.0;

  PointCloud() = default;
  PointCloud(int d, std::vector<double> coords, double total);

  std::size_t size() const { return d == 0 ? 0 : coords.size() / static_cast<std::size_t>(d); }
  double total() const { return weight_each * static_cast<double>(size()); }
  const double* point(std::size_t i) const { return &coords[i * static_cast<std::size_t>(d)]; }
  double* point(std::size_t i) { return &coords[i * static_cast<std::size_t>(d)]; }
  std::span<const double> row(std::size_t i) const { return {point(i), static_cast<std::size_t>(d)}; }
  void check() const;
};

struct PlanEntry {
  std::size_t cell;
  std::size_t point;
  double mass;
};

struct TransportPlan {
  std::vector<PlanEntry> entries;
  double cost_p = 0.0;  // sum of mass * ||center - point||^p
  double p = 1.0;
};

struct TransportResult {
  double cost = 0.0;  // (cost_p)^(1/p)
  TransportPlan plan;
};

struct SolverOptions {
  std::size_t max_cells = 1u << 21;
  int candidates = 8;  // candidate sinks kept per cell between verifications
};

// Solver state reused across solves on the same grid and point count.
class CapacityWorkspace {
 public:
  CapacityWorkspace();
  ~CapacityWorkspace();
  CapacityWorkspace(CapacityWorkspace&&) noexcept;
  CapacityWorkspace& operator=(CapacityWorkspace&&) noexcept;

  struct State;
  std::unique_ptr<State> state;
  // Totals over all solves.
  std::size_t pivots = 0;
  std::size_t refreshes = 0;
  std::size_t warm_solves = 0;  // finished from the previous basis
  std::size_t cold_solves = 0;
  double refresh_seconds = 0.0;
  double pivot_seconds = 0.0;
};

TransportResult solve_uniform_capacity(const GridDensity& grid, const PointCloud& cloud, double p,
                                       const SolverOptions& options = {}, CapacityWorkspace* workspace = nullptr);

// Index of the nearest site for every cell (lowest index on ties).
std::vector<int> nearest_sites(const GridDensity& grid, const PointCloud& cloud);

double nearest_assignment_cost(const GridDensity& grid, const PointCloud& cloud, double p);

// Spread: mass of a cell is uniform on the cell. Atom: mass sits at the center.
enum class CellModel { Spread, Atom };

double w1d_exact(const GridDensity& grid, const PointCloud& cloud, double p, CellModel model = CellModel::Spread);

double wb_boundary(const GridDensity& grid, const PointCloud& cloud, const Box& omega, double p);

// Exhaustive search over basic feasible solutions; at most 8 cells and 4 points.
double brute_force_oracle(const GridDensity& grid, const PointCloud& cloud, double p);

// Average of ||z - y||^p over the cell of `flat` for uniform z.
double cell_average_cost(const GridDensity& grid, std::size_t flat, const double* y, double p);

// Cost of a plan (raised to 1/p) with every entry spread uniformly over its cell.
double spread_cost(const GridDensity& grid, const PointCloud& cloud, const TransportPlan& plan, double p);

std::string plan_to_csv(const TransportPlan& plan);

}  // namespace eqq

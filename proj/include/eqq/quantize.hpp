#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eqq/measure.hpp"
#include "eqq/transport.hpp"

namespace eqq {

enum class InitKind { RhoSample, GridJitter, User };

struct OptimizerConfig {
  int max_iters = 100;
  double tol = 1e-6;  // stop when the relative cost decrease falls below this
  int restarts = 1;
  std::uint64_t seed = 0;
  InitKind init = InitKind::RhoSample;
  std::optional<PointCloud> user_init;  // required for InitKind::User
  SolverOptions solver;

  void validate() const;
};

enum class Method { Midpoint1d, Chunk1d, PierceGreedy, Hex2d, LloydCapacity, LloydClassical };

std::string_view to_string(Method m);
Method method_from_string(std::string_view s);

struct QuantizerResult {
  PointCloud cloud;
  // Optimized objective: cell masses at cell centers.
  double cost = 0.0;
  // Upper estimate for the measure with uniform density inside every cell.
  double error = 0.0;
  Method method = Method::LloydCapacity;
  std::vector<double> trace;
  std::uint64_t seed_used = 0;
  int restarts = 1;
  int iterations = 0;
  // best_quantizer: cost of every method that ran, in request order.
  std::vector<std::pair<Method, double>> method_costs;
};

// Points (2i - 1) / (2n) on [0, 1].
PointCloud midpoint_1d(int n);

PointCloud chunk_1d(const GridDensity& grid, int n, double p);

PointCloud scale_copy(const PointCloud& base, int k);

PointCloud dim_induct(const PointCloud& hi, const PointCloud& lo);

// Minimizer of sum_j masses[j] * ||c - y_j||^p; points are rows of `coords`.
std::vector<double> p_centroid(std::span<const double> masses, std::span<const double> coords, int d, double p);

struct PierceStep {
  double radius = 0.0;          // r_k
  double remaining_mass = 0.0;  // mass of nu_k before extraction
  double diameter = 0.0;        // diameter of the extracted support (cell boxes)
  double bound = 0.0;           // 4 sqrt(d) r_k (n |nu_k|)^(-1/d) + h sqrt(d)
};

struct PierceOutput {
  PointCloud cloud;
  std::vector<PierceStep> steps;
};

PierceOutput pierce_greedy(const GridDensity& grid, int n, double theta, double p);

struct HexRegion {
  enum class Kind { Square, Disk } kind = Kind::Square;
  Box square = Box::cube(2, 0.0, 1.0);
  double cx = 0.5, cy = 0.5, radius = 0.5;

  static HexRegion unit_square() { return {}; }
  static HexRegion disk(double cx, double cy, double radius);
  double area() const;
  bool contains(double x, double y) const;
  double boundary_distance(double x, double y) const;
  // Position along the boundary used to order the strip.
  double arc_key(double x, double y) const;
};

struct HexOutput {
  PointCloud cloud;
  int interior = 0;                  // k_n
  std::vector<double> piece_masses;  // n - k_n strip pieces
  double construction_cost_p = 0.0;  // cost^p of the construction's own plan
  int offset_index = 0;              // chosen tiling shift (0..24)
};

// `margin` is the required distance of interior centers from the boundary in
// units of the hexagon diameter.
HexOutput hex_2d(const GridDensity& grid, const HexRegion& region, int n, double p, double margin = 1.0);

QuantizerResult lloyd_capacity(const GridDensity& grid, int n, double p, const OptimizerConfig& cfg);
QuantizerResult lloyd_classical(const GridDensity& grid, int n, double p, const OptimizerConfig& cfg);

// Capacity cost and spread error of a fixed cloud.
QuantizerResult evaluate_capacity(const GridDensity& grid, const PointCloud& cloud, double p,
                                  const SolverOptions& solver = {});
QuantizerResult evaluate_classical(const GridDensity& grid, const PointCloud& cloud, double p);

struct BestOptions {
  bool polish = false;  // warm-started capacity Lloyd after every construction
  double theta = 8.0;   // Pierce moment order
  HexRegion region;     // hex region
  double hex_margin = 1.0;
};

QuantizerResult best_quantizer(const GridDensity& grid, int n, double p, std::span<const Method> methods,
                               const OptimizerConfig& cfg, const BestOptions& options = {});

// Threads used for independent jobs: EQQ_THREADS if set, else the hardware count.
int worker_threads();

}  // namespace eqq

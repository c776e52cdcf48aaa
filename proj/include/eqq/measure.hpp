#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace eqq {

// Axis-aligned box [lo, hi].
struct Box {
  std::vector<double> lo;
  std::vector<double> hi;

  Box() = default;
  Box(std::vector<double> lo_, std::vector<double> hi_);
  static Box cube(int d, double lo, double hi);

  int dim() const { return static_cast<int>(lo.size()); }
  double volume() const;
  double diameter() const;
  bool contains(const double* x) const;
  // Distance from an interior point to the boundary (0 outside).
  double boundary_distance(const double* x) const;
};

// 0/1 indicator on a regular (possibly rectangular) lattice over `box`.
struct IndicatorGrid {
  Box box;
  std::vector<int> shape;
  std::vector<std::uint8_t> inside;

  static IndicatorGrid full(const Box& box);
  // Cells whose center lies in the closed disk.
  static IndicatorGrid disk(double cx, double cy, double radius, int resolution);

  int dim() const { return box.dim(); }
  double cell_extent(int axis) const;
  double inside_volume() const;
};

enum class MeasureKind { UniformCube, UniformSet, Gaussian, Mixture, TwoBlocks, SegmentSingular };

// Declarative description of an analytic test measure.
struct MeasureSpec {
  MeasureKind kind = MeasureKind::UniformCube;
  int d = 1;
  double declared_total = 1.0;

  std::vector<double> mean;  // Gaussian
  double sigma = 1.0;

  std::vector<double> shift;  // TwoBlocks: B = shift + [0,1]^d
  double beta = 0.5;          // TwoBlocks: mass of B

  std::vector<double> seg_a, seg_b;  // SegmentSingular

  IndicatorGrid indicator;  // UniformSet

  std::vector<double> weights;  // Mixture
  std::vector<MeasureSpec> parts;

  static MeasureSpec uniform_cube(int d);
  static MeasureSpec uniform_set(IndicatorGrid indicator);
  static MeasureSpec gaussian(std::vector<double> mean, double sigma);
  static MeasureSpec two_blocks(std::vector<double> shift, double beta = 0.5);
  static MeasureSpec segment(std::vector<double> a, std::vector<double> b);
  static MeasureSpec mixture(std::vector<std::pair<double, MeasureSpec>> parts);

  void validate() const;
  // Box holding all mass (Gaussian: mean +- 6 sigma).
  Box natural_box() const;
  bool has_singular_part() const;
};

// Distance between [0,1]^d and shift + [0,1]^d.
double block_gap(std::span<const double> shift);

// Regular grid with cubic cells. Flat indices are row-major (last axis fastest).
struct GridDensity {
  int d = 0;
  std::vector<int> shape;
  std::vector<double> origin;
  double h = 1.0;
  std::vector<double> masses;
  double total = 0.0;
  // Empty, or one flag per cell marking declared singular support.
  std::vector<std::uint8_t> singular;

  static GridDensity from_masses(int d, std::vector<int> shape, std::vector<double> origin, double h,
                                 std::vector<double> masses, std::vector<std::uint8_t> singular = {});

  std::size_t cell_count() const { return masses.size(); }
  double cell_volume() const;
  void center(std::size_t flat, double* out) const;
  std::vector<double> center(std::size_t flat) const;
  std::size_t flat_index(std::span<const int> idx) const;
  void unflatten(std::size_t flat, int* idx) const;
  double density(std::size_t flat) const { return masses[flat] / cell_volume(); }
  bool is_singular(std::size_t flat) const { return !singular.empty() && singular[flat] != 0; }
  Box bbox() const;
  std::size_t nonzero_count() const;
  // Throws InvalidArgument on a violated invariant.
  void check() const;
};

// Gaussian mass allowed outside the box without truncate_ok (relative to total).
inline constexpr double kGaussianTailTolerance = 1e-6;

GridDensity build_grid(const MeasureSpec& spec, std::span<const int> resolution, const Box& bbox,
                       bool truncate_ok = false);

// Cubic grid of spacing h over spec.natural_box(), extended upward to a whole
// number of cells per axis.
GridDensity build_grid_spacing(const MeasureSpec& spec, double h, bool truncate_ok = false);

double moment(const GridDensity& grid, double theta);

// sum_c (masses[c]/h^d)^exponent * h^d, optionally skipping singular cells.
double density_functional(const GridDensity& grid, double exponent, bool exclude_singular);

}  // namespace eqq

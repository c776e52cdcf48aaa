#include "eqq/measure.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "eqq/errors.hpp"

namespace eqq {

namespace {

double overlap(double a0, double a1, double b0, double b1) {
  return std::max(0.0, std::min(a1, b1) - std::max(a0, b0));
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// P(a < Z < b) for a standard normal, accurate in both tails.
double normal_interval(double a, double b) {
  if (a >= 0.0) return 0.5 * (std::erfc(a / std::sqrt(2.0)) - std::erfc(b / std::sqrt(2.0)));
  if (b <= 0.0) return 0.5 * (std::erfc(-b / std::sqrt(2.0)) - std::erfc(-a / std::sqrt(2.0)));
  return normal_cdf(b) - normal_cdf(a);
}

std::size_t product(std::span<const int> shape) {
  std::size_t n = 1;
  for (int s : shape) n *= static_cast<std::size_t>(s);
  return n;
}

// masses[c] += scale * prod_k axis[k][idx_k]
void add_product(const std::vector<std::vector<double>>& axis, double scale, std::span<const int> shape,
                 std::vector<double>& masses) {
  const int d = static_cast<int>(shape.size());
  std::vector<int> idx(d, 0);
  for (std::size_t c = 0; c < masses.size(); ++c) {
    double m = scale;
    for (int k = 0; k < d && m != 0.0; ++k) m *= axis[k][idx[k]];
    masses[c] += m;
    for (int k = d - 1; k >= 0; --k) {
      if (++idx[k] < shape[k]) break;
      idx[k] = 0;
    }
  }
}

struct GridFrame {
  int d;
  std::vector<int> shape;
  std::vector<double> origin;
  double h;

  double lo(int k, int i) const { return origin[k] + h * i; }
};

std::vector<double> axis_overlaps(const GridFrame& g, int k, double a, double b) {
  std::vector<double> out(g.shape[k]);
  for (int i = 0; i < g.shape[k]; ++i) out[i] = overlap(g.lo(k, i), g.lo(k, i) + g.h, a, b);
  return out;
}

void add_uniform_box(const GridFrame& g, const Box& box, double weight, std::vector<double>& masses) {
  std::vector<std::vector<double>> axis(g.d);
  for (int k = 0; k < g.d; ++k) axis[k] = axis_overlaps(g, k, box.lo[k], box.hi[k]);
  add_product(axis, weight / box.volume(), g.shape, masses);
}

void add_uniform_set(const GridFrame& g, const IndicatorGrid& ind, double weight, std::vector<double>& masses) {
  const double vol = ind.inside_volume();
  const int d = g.d;
  std::vector<int> idx(d, 0);
  std::vector<double> ext(d);
  for (int k = 0; k < d; ++k) ext[k] = ind.cell_extent(k);
  std::vector<int> first(d), last(d);
  std::vector<std::vector<double>> ov(d);
  for (std::size_t c = 0; c < ind.inside.size(); ++c) {
    if (ind.inside[c]) {
      bool empty = false;
      for (int k = 0; k < d; ++k) {
        const double a = ind.box.lo[k] + ext[k] * idx[k];
        const double b = a + ext[k];
        first[k] = std::max(0, static_cast<int>(std::floor((a - g.origin[k]) / g.h)));
        last[k] = std::min(g.shape[k] - 1, static_cast<int>(std::floor((b - g.origin[k]) / g.h)));
        if (first[k] > last[k]) {
          empty = true;
          break;
        }
        ov[k].assign(last[k] - first[k] + 1, 0.0);
        for (int i = first[k]; i <= last[k]; ++i) ov[k][i - first[k]] = overlap(g.lo(k, i), g.lo(k, i) + g.h, a, b);
      }
      if (!empty) {
        std::vector<int> j(first);
        while (true) {
          double m = weight / vol;
          std::size_t flat = 0;
          for (int k = 0; k < d; ++k) {
            m *= ov[k][j[k] - first[k]];
            flat = flat * g.shape[k] + j[k];
          }
          masses[flat] += m;
          int k = d - 1;
          for (; k >= 0; --k) {
            if (++j[k] <= last[k]) break;
            j[k] = first[k];
          }
          if (k < 0) break;
        }
      }
    }
    for (int k = d - 1; k >= 0; --k) {
      if (++idx[k] < ind.shape[k]) break;
      idx[k] = 0;
    }
  }
}

// Returns the Gaussian mass fraction falling outside the grid box.
double add_gaussian(const GridFrame& g, const MeasureSpec& s, double weight, std::vector<double>& masses) {
  std::vector<std::vector<double>> axis(g.d);
  double inside = 1.0;
  for (int k = 0; k < g.d; ++k) {
    axis[k].resize(g.shape[k]);
    for (int i = 0; i < g.shape[k]; ++i) {
      axis[k][i] = normal_interval((g.lo(k, i) - s.mean[k]) / s.sigma, (g.lo(k, i) + g.h - s.mean[k]) / s.sigma);
    }
    inside *= normal_interval((g.lo(k, 0) - s.mean[k]) / s.sigma, (g.lo(k, g.shape[k]) - s.mean[k]) / s.sigma);
  }
  add_product(axis, weight, g.shape, masses);
  return 1.0 - inside;
}

void add_segment(const GridFrame& g, const MeasureSpec& s, double weight, std::vector<double>& masses,
                 std::vector<std::uint8_t>& singular) {
  const int d = g.d;
  std::vector<double> ts{0.0, 1.0};
  for (int k = 0; k < d; ++k) {
    const double a = s.seg_a[k], b = s.seg_b[k];
    if (a == b) continue;
    const double lo = std::min(a, b), hi = std::max(a, b);
    const long m0 = static_cast<long>(std::ceil((lo - g.origin[k]) / g.h));
    const long m1 = static_cast<long>(std::floor((hi - g.origin[k]) / g.h));
    for (long m = std::max(m0, 0L); m <= std::min(m1, static_cast<long>(g.shape[k])); ++m) {
      const double t = (g.origin[k] + g.h * m - a) / (b - a);
      if (t > 0.0 && t < 1.0) ts.push_back(t);
    }
  }
  std::sort(ts.begin(), ts.end());
  std::vector<double> x(d);
  for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
    const double t0 = ts[i], t1 = ts[i + 1];
    if (t1 <= t0) continue;
    const double tm = 0.5 * (t0 + t1);
    std::size_t flat = 0;
    bool in = true;
    for (int k = 0; k < d; ++k) {
      x[k] = s.seg_a[k] + tm * (s.seg_b[k] - s.seg_a[k]);
      const long j = static_cast<long>(std::floor((x[k] - g.origin[k]) / g.h));
      if (j < 0 || j >= g.shape[k]) {
        in = false;
        break;
      }
      flat = flat * g.shape[k] + static_cast<std::size_t>(j);
    }
    if (!in) continue;
    masses[flat] += weight * (t1 - t0);
    singular[flat] = 1;
  }
}

double fill(const GridFrame& g, const MeasureSpec& s, double weight, std::vector<double>& masses,
            std::vector<std::uint8_t>& singular) {
  switch (s.kind) {
    case MeasureKind::UniformCube:
      add_uniform_box(g, Box::cube(s.d, 0.0, 1.0), weight, masses);
      return 0.0;
    case MeasureKind::UniformSet:
      add_uniform_set(g, s.indicator, weight, masses);
      return 0.0;
    case MeasureKind::Gaussian:
      return weight * add_gaussian(g, s, weight, masses);
    case MeasureKind::TwoBlocks: {
      add_uniform_box(g, Box::cube(s.d, 0.0, 1.0), weight * (1.0 - s.beta), masses);
      Box b = Box::cube(s.d, 0.0, 1.0);
      for (int k = 0; k < s.d; ++k) {
        b.lo[k] += s.shift[k];
        b.hi[k] += s.shift[k];
      }
      add_uniform_box(g, b, weight * s.beta, masses);
      return 0.0;
    }
    case MeasureKind::SegmentSingular:
      add_segment(g, s, weight, masses, singular);
      return 0.0;
    case MeasureKind::Mixture: {
      double tail = 0.0;
      for (std::size_t i = 0; i < s.parts.size(); ++i) tail += fill(g, s.parts[i], weight * s.weights[i], masses, singular);
      return tail;
    }
  }
  return 0.0;
}

}  // namespace

Box::Box(std::vector<double> lo_, std::vector<double> hi_) : lo(std::move(lo_)), hi(std::move(hi_)) {
  require(lo.size() == hi.size(), ErrorCode::DimensionMismatch, "box corners differ in dimension");
}

Box Box::cube(int d, double lo, double hi) {
  return Box(std::vector<double>(d, lo), std::vector<double>(d, hi));
}

double Box::volume() const {
  double v = 1.0;
  for (int k = 0; k < dim(); ++k) v *= std::max(0.0, hi[k] - lo[k]);
  return v;
}

double Box::diameter() const {
  double s = 0.0;
  for (int k = 0; k < dim(); ++k) s += (hi[k] - lo[k]) * (hi[k] - lo[k]);
  return std::sqrt(s);
}

bool Box::contains(const double* x) const {
  for (int k = 0; k < dim(); ++k)
    if (x[k] < lo[k] || x[k] > hi[k]) return false;
  return true;
}

double Box::boundary_distance(const double* x) const {
  double best = std::numeric_limits<double>::infinity();
  for (int k = 0; k < dim(); ++k) best = std::min({best, x[k] - lo[k], hi[k] - x[k]});
  return std::max(0.0, best);
}

IndicatorGrid IndicatorGrid::full(const Box& box) {
  IndicatorGrid g;
  g.box = box;
  g.shape.assign(box.dim(), 1);
  g.inside.assign(1, 1);
  return g;
}

IndicatorGrid IndicatorGrid::disk(double cx, double cy, double radius, int resolution) {
  IndicatorGrid g;
  g.box = Box({cx - radius, cy - radius}, {cx + radius, cy + radius});
  g.shape = {resolution, resolution};
  g.inside.assign(static_cast<std::size_t>(resolution) * resolution, 0);
  const double e = 2.0 * radius / resolution;
  for (int i = 0; i < resolution; ++i) {
    for (int j = 0; j < resolution; ++j) {
      const double x = cx - radius + e * (i + 0.5) - cx;
      const double y = cy - radius + e * (j + 0.5) - cy;
      g.inside[static_cast<std::size_t>(i) * resolution + j] = (x * x + y * y <= radius * radius) ? 1 : 0;
    }
  }
  return g;
}

double IndicatorGrid::cell_extent(int axis) const { return (box.hi[axis] - box.lo[axis]) / shape[axis]; }

double IndicatorGrid::inside_volume() const {
  double cell = 1.0;
  for (int k = 0; k < dim(); ++k) cell *= cell_extent(k);
  const auto count = std::count(inside.begin(), inside.end(), std::uint8_t{1});
  return cell * static_cast<double>(count);
}

MeasureSpec MeasureSpec::uniform_cube(int d) {
  MeasureSpec s;
  s.kind = MeasureKind::UniformCube;
  s.d = d;
  return s;
}

MeasureSpec MeasureSpec::uniform_set(IndicatorGrid indicator) {
  MeasureSpec s;
  s.kind = MeasureKind::UniformSet;
  s.d = indicator.dim();
  s.indicator = std::move(indicator);
  return s;
}

MeasureSpec MeasureSpec::gaussian(std::vector<double> mean, double sigma) {
  MeasureSpec s;
  s.kind = MeasureKind::Gaussian;
  s.d = static_cast<int>(mean.size());
  s.mean = std::move(mean);
  s.sigma = sigma;
  return s;
}

MeasureSpec MeasureSpec::two_blocks(std::vector<double> shift, double beta) {
  MeasureSpec s;
  s.kind = MeasureKind::TwoBlocks;
  s.d = static_cast<int>(shift.size());
  s.shift = std::move(shift);
  s.beta = beta;
  return s;
}

MeasureSpec MeasureSpec::segment(std::vector<double> a, std::vector<double> b) {
  MeasureSpec s;
  s.kind = MeasureKind::SegmentSingular;
  s.d = static_cast<int>(a.size());
  s.seg_a = std::move(a);
  s.seg_b = std::move(b);
  return s;
}

MeasureSpec MeasureSpec::mixture(std::vector<std::pair<double, MeasureSpec>> parts) {
  MeasureSpec s;
  s.kind = MeasureKind::Mixture;
  s.d = parts.empty() ? 0 : parts.front().second.d;
  for (auto& [w, p] : parts) {
    s.weights.push_back(w);
    s.parts.push_back(std::move(p));
  }
  return s;
}

double block_gap(std::span<const double> shift) {
  double s = 0.0;
  for (double v : shift) {
    const double g = std::max(0.0, std::abs(v) - 1.0);
    s += g * g;
  }
  return std::sqrt(s);
}

void MeasureSpec::validate() const {
  require(d >= 1, ErrorCode::InvalidArgument, "dimension must be >= 1");
  require(declared_total > 0.0 && std::isfinite(declared_total), ErrorCode::InvalidArgument,
          "declared_total must be positive");
  switch (kind) {
    case MeasureKind::UniformCube:
      break;
    case MeasureKind::UniformSet:
      require(indicator.dim() == d && static_cast<int>(indicator.shape.size()) == d, ErrorCode::DimensionMismatch,
              "indicator dimension");
      require(indicator.inside.size() == product(indicator.shape), ErrorCode::InvalidArgument,
              "indicator size does not match its shape");
      require(indicator.inside_volume() > 0.0, ErrorCode::EmptyMeasure, "indicator selects no cell");
      break;
    case MeasureKind::Gaussian:
      require(static_cast<int>(mean.size()) == d, ErrorCode::DimensionMismatch, "gaussian mean dimension");
      require(sigma > 0.0 && std::isfinite(sigma), ErrorCode::InvalidArgument, "sigma must be positive");
      break;
    case MeasureKind::TwoBlocks:
      require(static_cast<int>(shift.size()) == d, ErrorCode::DimensionMismatch, "two_blocks shift dimension");
      require(block_gap(shift) > 0.0, ErrorCode::InvalidArgument, "two_blocks shift must separate the cubes");
      require(beta > 0.0 && beta < 1.0, ErrorCode::InvalidArgument, "two_blocks beta must lie in (0,1)");
      break;
    case MeasureKind::SegmentSingular:
      require(static_cast<int>(seg_a.size()) == d && static_cast<int>(seg_b.size()) == d,
              ErrorCode::DimensionMismatch, "segment endpoint dimension");
      require(seg_a != seg_b, ErrorCode::InvalidArgument, "segment endpoints must be distinct");
      break;
    case MeasureKind::Mixture: {
      require(!parts.empty() && parts.size() == weights.size(), ErrorCode::InvalidArgument, "mixture needs parts");
      double sum = 0.0;
      for (std::size_t i = 0; i < parts.size(); ++i) {
        require(weights[i] >= 0.0 && weights[i] <= 1.0, ErrorCode::InvalidArgument, "mixture weight outside [0,1]");
        require(parts[i].d == d, ErrorCode::DimensionMismatch, "mixture part dimension");
        parts[i].validate();
        sum += weights[i];
      }
      require(std::abs(sum - 1.0) <= 1e-12, ErrorCode::InvalidArgument, "mixture weights must sum to 1");
      break;
    }
  }
}

Box MeasureSpec::natural_box() const {
  switch (kind) {
    case MeasureKind::UniformCube:
      return Box::cube(d, 0.0, 1.0);
    case MeasureKind::UniformSet:
      return indicator.box;
    case MeasureKind::Gaussian: {
      Box b = Box::cube(d, 0.0, 0.0);
      for (int k = 0; k < d; ++k) {
        b.lo[k] = mean[k] - 6.0 * sigma;
        b.hi[k] = mean[k] + 6.0 * sigma;
      }
      return b;
    }
    case MeasureKind::TwoBlocks: {
      Box b = Box::cube(d, 0.0, 1.0);
      for (int k = 0; k < d; ++k) {
        b.lo[k] = std::min(0.0, shift[k]);
        b.hi[k] = std::max(1.0, shift[k] + 1.0);
      }
      return b;
    }
    case MeasureKind::SegmentSingular: {
      Box b = Box::cube(d, 0.0, 0.0);
      for (int k = 0; k < d; ++k) {
        b.lo[k] = std::min(seg_a[k], seg_b[k]);
        b.hi[k] = std::max(seg_a[k], seg_b[k]);
        if (b.hi[k] - b.lo[k] < 1e-9) {
          b.lo[k] -= 0.5;
          b.hi[k] += 0.5;
        }
      }
      return b;
    }
    case MeasureKind::Mixture: {
      Box b = parts.front().natural_box();
      for (std::size_t i = 1; i < parts.size(); ++i) {
        const Box o = parts[i].natural_box();
        for (int k = 0; k < d; ++k) {
          b.lo[k] = std::min(b.lo[k], o.lo[k]);
          b.hi[k] = std::max(b.hi[k], o.hi[k]);
        }
      }
      return b;
    }
  }
  return Box::cube(d, 0.0, 1.0);
}

bool MeasureSpec::has_singular_part() const {
  if (kind == MeasureKind::SegmentSingular) return true;
  if (kind == MeasureKind::Mixture)
    return std::any_of(parts.begin(), parts.end(), [](const MeasureSpec& p) { return p.has_singular_part(); });
  return false;
}

GridDensity GridDensity::from_masses(int d, std::vector<int> shape, std::vector<double> origin, double h,
                                     std::vector<double> masses, std::vector<std::uint8_t> singular) {
  GridDensity g;
  g.d = d;
  g.shape = std::move(shape);
  g.origin = std::move(origin);
  g.h = h;
  g.masses = std::move(masses);
  g.singular = std::move(singular);
  g.total = 0.0;
  for (double m : g.masses) g.total += m;
  g.check();
  return g;
}

double GridDensity::cell_volume() const { return std::pow(h, d); }

void GridDensity::unflatten(std::size_t flat, int* idx) const {
  for (int k = d - 1; k >= 0; --k) {
    idx[k] = static_cast<int>(flat % static_cast<std::size_t>(shape[k]));
    flat /= static_cast<std::size_t>(shape[k]);
  }
}

void GridDensity::center(std::size_t flat, double* out) const {
  for (int k = d - 1; k >= 0; --k) {
    const auto i = flat % static_cast<std::size_t>(shape[k]);
    flat /= static_cast<std::size_t>(shape[k]);
    out[k] = origin[k] + h * (static_cast<double>(i) + 0.5);
  }
}

std::vector<double> GridDensity::center(std::size_t flat) const {
  std::vector<double> c(d);
  center(flat, c.data());
  return c;
}

std::size_t GridDensity::flat_index(std::span<const int> idx) const {
  std::size_t flat = 0;
  for (int k = 0; k < d; ++k) flat = flat * static_cast<std::size_t>(shape[k]) + static_cast<std::size_t>(idx[k]);
  return flat;
}

Box GridDensity::bbox() const {
  Box b = Box::cube(d, 0.0, 0.0);
  for (int k = 0; k < d; ++k) {
    b.lo[k] = origin[k];
    b.hi[k] = origin[k] + h * shape[k];
  }
  return b;
}

std::size_t GridDensity::nonzero_count() const {
  return static_cast<std::size_t>(std::count_if(masses.begin(), masses.end(), [](double m) { return m > 0.0; }));
}

void GridDensity::check() const {
  require(d >= 1, ErrorCode::InvalidArgument, "grid dimension must be >= 1");
  require(static_cast<int>(shape.size()) == d && static_cast<int>(origin.size()) == d, ErrorCode::DimensionMismatch,
          "grid shape/origin dimension");
  require(h > 0.0 && std::isfinite(h), ErrorCode::InvalidArgument, "grid spacing must be positive");
  for (int s : shape) require(s >= 1, ErrorCode::InvalidArgument, "grid resolution must be >= 1");
  require(masses.size() == product(shape), ErrorCode::InvalidArgument, "mass array does not match shape");
  require(singular.empty() || singular.size() == masses.size(), ErrorCode::InvalidArgument,
          "singular flags do not match shape");
  double sum = 0.0;
  for (double m : masses) {
    require(m >= 0.0 && std::isfinite(m), ErrorCode::InvalidArgument, "negative or non-finite cell mass");
    sum += m;
  }
  require(std::abs(sum - total) <= 1e-12 * std::max(1.0, std::abs(total)), ErrorCode::InvalidArgument,
          "grid total does not match the sum of masses");
}

GridDensity build_grid(const MeasureSpec& spec, std::span<const int> resolution, const Box& bbox, bool truncate_ok) {
  spec.validate();
  const int d = spec.d;
  require(static_cast<int>(resolution.size()) == d && bbox.dim() == d, ErrorCode::DimensionMismatch,
          "resolution/bbox dimension differs from the measure");
  require(bbox.volume() > 0.0, ErrorCode::InvalidArgument, "bbox must have positive volume");
  for (int r : resolution) require(r >= 1, ErrorCode::InvalidArgument, "resolution must be >= 1 per axis");

  GridFrame g{d, std::vector<int>(resolution.begin(), resolution.end()), bbox.lo, 0.0};
  g.h = (bbox.hi[0] - bbox.lo[0]) / resolution[0];
  for (int k = 1; k < d; ++k) {
    const double hk = (bbox.hi[k] - bbox.lo[k]) / resolution[k];
    require(std::abs(hk - g.h) <= 1e-12 * g.h, ErrorCode::InvalidArgument,
            "grid cells must be cubic (equal spacing on every axis)");
  }

  std::vector<double> masses(product(g.shape), 0.0);
  std::vector<std::uint8_t> singular(masses.size(), 0);
  const double tail = fill(g, spec, 1.0, masses, singular);
  if (!spec.has_singular_part()) singular.clear();

  require(tail <= kGaussianTailTolerance || truncate_ok, ErrorCode::TailTooHeavy,
          "Gaussian mass outside the bbox is " + std::to_string(tail) + " (pass truncate_ok to accept)");

  double sum = 0.0;
  for (double m : masses) sum += m;
  require(sum > 0.0, ErrorCode::EmptyMeasure, "measure puts no mass inside the bbox");
  const double scale = spec.declared_total / sum;
  for (double& m : masses) m *= scale;
  return GridDensity::from_masses(d, std::move(g.shape), std::move(g.origin), g.h, std::move(masses),
                                  std::move(singular));
}

GridDensity build_grid_spacing(const MeasureSpec& spec, double h, bool truncate_ok) {
  require(h > 0.0, ErrorCode::InvalidArgument, "spacing must be positive");
  Box box = spec.natural_box();
  std::vector<int> res(spec.d);
  for (int k = 0; k < spec.d; ++k) {
    res[k] = std::max(1, static_cast<int>(std::ceil((box.hi[k] - box.lo[k]) / h - 1e-9)));
    box.hi[k] = box.lo[k] + h * res[k];
  }
  return build_grid(spec, res, box, truncate_ok);
}

double moment(const GridDensity& grid, double theta) {
  require(theta >= 1.0, ErrorCode::InvalidArgument, "moment order must be >= 1");
  std::vector<double> c(grid.d);
  double s = 0.0;
  for (std::size_t i = 0; i < grid.cell_count(); ++i) {
    if (grid.masses[i] == 0.0) continue;
    grid.center(i, c.data());
    double sq = 0.0;
    for (double v : c) sq += v * v;
    s += grid.masses[i] * std::pow(sq, 0.5 * theta);
  }
  return s;
}

double density_functional(const GridDensity& grid, double exponent, bool exclude_singular) {
  require(exponent > 0.0 && exponent <= 1.0, ErrorCode::ExponentOutOfRange, "exponent must lie in (0,1]");
  const double vol = grid.cell_volume();
  double s = 0.0;
  for (std::size_t i = 0; i < grid.cell_count(); ++i) {
    if (grid.masses[i] == 0.0) continue;
    if (exclude_singular && grid.is_singular(i)) continue;
    s += std::pow(grid.masses[i] / vol, exponent) * vol;
  }
  return s;
}

}  // namespace eqq

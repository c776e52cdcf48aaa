#include "eqq/quantize.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <thread>

#include "eqq/errors.hpp"
#include "eqq/geometry.hpp"
#include "parallel.hpp"

namespace eqq {

namespace {

constexpr double kSqrt3 = 1.7320508075688772;

void check_grid(const GridDensity& grid) {
  grid.check();
  require(grid.total > 0.0, ErrorCode::EmptyMeasure, "grid has no mass");
}

}  // namespace

void OptimizerConfig::validate() const {
  require(max_iters >= 1, ErrorCode::InvalidArgument, "max_iters must be >= 1");
  require(tol > 0.0, ErrorCode::InvalidArgument, "tol must be > 0");
  require(restarts >= 1, ErrorCode::InvalidArgument, "restarts must be >= 1");
  require(init != InitKind::User || user_init.has_value(), ErrorCode::InvalidArgument,
          "user initialization needs an initial cloud");
}

std::string_view to_string(Method m) {
  switch (m) {
    case Method::Midpoint1d: return "midpoint_1d";
    case Method::Chunk1d: return "chunk_1d";
    case Method::PierceGreedy: return "pierce_greedy";
    case Method::Hex2d: return "hex_2d";
    case Method::LloydCapacity: return "lloyd_capacity";
    case Method::LloydClassical: return "lloyd_classical";
  }
  return "unknown";
}

Method method_from_string(std::string_view s) {
  if (s == "midpoint_1d" || s == "midpoint") return Method::Midpoint1d;
  if (s == "chunk_1d" || s == "chunk") return Method::Chunk1d;
  if (s == "pierce_greedy" || s == "pierce") return Method::PierceGreedy;
  if (s == "hex_2d" || s == "hex") return Method::Hex2d;
  if (s == "lloyd_capacity" || s == "lloyd") return Method::LloydCapacity;
  if (s == "lloyd_classical" || s == "classical") return Method::LloydClassical;
  fail(ErrorCode::InvalidArgument, "unknown method: " + std::string(s));
}

int worker_threads() {
  if (const char* env = std::getenv("EQQ_THREADS")) {
    const int t = std::atoi(env);
    if (t >= 1) return t;
  }
  return std::max(1U, std::thread::hardware_concurrency());
}

PointCloud midpoint_1d(int n) {
  require(n >= 1, ErrorCode::InvalidArgument, "n must be >= 1");
  std::vector<double> x(n);
  for (int i = 0; i < n; ++i) x[i] = (2.0 * (i + 1) - 1.0) / (2.0 * n);
  return PointCloud(1, std::move(x), 1.0);
}

PointCloud chunk_1d(const GridDensity& grid, int n, double p) {
  require(grid.d == 1, ErrorCode::DimensionMismatch, "chunk_1d needs d = 1");
  require(n >= 1, ErrorCode::InvalidArgument, "n must be >= 1");
  require(p >= 1.0, ErrorCode::InvalidArgument, "p must be >= 1");
  check_grid(grid);

  // Pieces (x0, x1, mass) of uniform density making up every chunk.
  struct Piece {
    double x0, x1, mass;
  };
  std::vector<std::vector<Piece>> chunks(n);
  const double w = grid.total / n;
  int chunk = 0;
  double chunk_end = w;
  double cum = 0.0;
  for (std::size_t c = 0; c < grid.cell_count(); ++c) {
    const double m = grid.masses[c];
    if (m <= 0.0) continue;
    const double a = grid.origin[0] + grid.h * static_cast<double>(c);
    double u0 = cum;
    const double cell_end = cum + m;
    while (u0 < cell_end) {
      const bool last = chunk + 1 >= n;
      const double u1 = last ? cell_end : std::min(cell_end, chunk_end);
      if (u1 > u0)
        chunks[chunk].push_back({a + (u0 - cum) / m * grid.h, a + (u1 - cum) / m * grid.h, u1 - u0});
      u0 = u1;
      if (!last && u1 >= chunk_end) {
        ++chunk;
        chunk_end = w * (chunk + 1);
      }
    }
    cum = cell_end;
  }

  std::vector<double> x(n);
  for (int i = 0; i < n; ++i) {
    const auto& pieces = chunks[i];
    if (pieces.empty()) {
      // rounding left this chunk empty; reuse the neighbor's position
      x[i] = i > 0 ? x[i - 1] : grid.origin[0];
      continue;
    }
    double mass = 0.0;
    for (const auto& q : pieces) mass += q.mass;
    if (p == 2.0) {
      double s = 0.0;
      for (const auto& q : pieces) s += q.mass * 0.5 * (q.x0 + q.x1);
      x[i] = s / mass;
    } else if (p == 1.0) {
      double acc = 0.0;
      x[i] = pieces.back().x1;
      for (const auto& q : pieces) {
        if (acc + q.mass >= 0.5 * mass) {
          x[i] = q.x0 + (0.5 * mass - acc) / q.mass * (q.x1 - q.x0);
          break;
        }
        acc += q.mass;
      }
    } else {
      auto f = [&](double y) {
        double s = 0.0;
        for (const auto& q : pieces)
          s += q.x1 > q.x0 ? q.mass / (q.x1 - q.x0) * power_integral(q.x0, q.x1, y, p)
                           : q.mass * pow_nonneg(std::abs(q.x0 - y), p);
        return s;
      };
      constexpr double g = 0.6180339887498949;
      double a = pieces.front().x0, b = pieces.back().x1;
      double c1 = b - g * (b - a), c2 = a + g * (b - a);
      double f1 = f(c1), f2 = f(c2);
      while (b - a > 1e-12) {
        if (f1 <= f2) {
          b = c2;
          c2 = c1;
          f2 = f1;
          c1 = b - g * (b - a);
          f1 = f(c1);
        } else {
          a = c1;
          c1 = c2;
          f1 = f2;
          c2 = a + g * (b - a);
          f2 = f(c2);
        }
      }
      x[i] = 0.5 * (a + b);
    }
  }
  return PointCloud(1, std::move(x), grid.total);
}

PointCloud scale_copy(const PointCloud& base, int k) {
  require(k >= 1, ErrorCode::InvalidArgument, "k must be >= 1");
  base.check();
  const int d = base.d;
  for (double v : base.coords)
    require(v >= 0.0 && v <= 1.0, ErrorCode::OutOfDomain, "base point outside the unit cube");
  std::size_t copies = 1;
  for (int a = 0; a < d; ++a) copies *= static_cast<std::size_t>(k);
  std::vector<double> out;
  out.reserve(copies * base.coords.size());
  std::vector<int> idx(d, 0);
  for (std::size_t c = 0; c < copies; ++c) {
    std::size_t t = c;
    for (int a = d - 1; a >= 0; --a) {
      idx[a] = static_cast<int>(t % k);
      t /= k;
    }
    for (std::size_t j = 0; j < base.size(); ++j)
      for (int a = 0; a < d; ++a) out.push_back((idx[a] + base.point(j)[a]) / k);
  }
  return PointCloud(d, std::move(out), base.total());
}

PointCloud dim_induct(const PointCloud& hi, const PointCloud& lo) {
  hi.check();
  lo.check();
  require(hi.d == lo.d + 1, ErrorCode::DimensionMismatch, "dim_induct needs dimensions d + 1 and d");
  const int d = lo.d;
  const double n = static_cast<double>(hi.size());
  const double l = static_cast<double>(lo.size());
  std::vector<double> out;
  out.reserve((hi.size() + lo.size()) * (d + 1));
  for (std::size_t i = 0; i < hi.size(); ++i) {
    const double* x = hi.point(i);
    out.insert(out.end(), x, x + d);
    out.push_back(n * x[d] / (n + l));
  }
  for (std::size_t j = 0; j < lo.size(); ++j) {
    const double* y = lo.point(j);
    out.insert(out.end(), y, y + d);
    out.push_back(1.0);
  }
  return PointCloud(d + 1, std::move(out), hi.total());
}

std::vector<double> p_centroid(std::span<const double> masses, std::span<const double> coords, int d, double p) {
  const std::size_t m = masses.size();
  require(coords.size() == m * static_cast<std::size_t>(d), ErrorCode::DimensionMismatch,
          "p_centroid: coordinate count does not match masses");
  double total = 0.0;
  for (double w : masses) total += w;
  require(total > 0.0, ErrorCode::InvalidArgument, "p_centroid needs positive mass");
  auto y = [&](std::size_t j) { return &coords[j * d]; };

  std::vector<double> c(d, 0.0);
  for (std::size_t j = 0; j < m; ++j)
    for (int a = 0; a < d; ++a) c[a] += masses[j] * y(j)[a];
  for (double& v : c) v /= total;
  if (p == 2.0 || m == 1) {
    if (m == 1) std::copy_n(y(0), d, c.begin());
    return c;
  }

  double spread = 0.0;
  for (std::size_t j = 0; j < m; ++j) spread = std::max(spread, std::sqrt(sq_dist(y(j), c.data(), d)));
  if (spread == 0.0) return c;

  std::vector<double> next(d), grad(d);
  if (p == 1.0) {
    // Weiszfeld with the Vardi-Zhang correction at data points
    for (int it = 0; it < 100000; ++it) {
      double wsum = 0.0, coincident = 0.0;
      std::fill(next.begin(), next.end(), 0.0);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t j = 0; j < m; ++j) {
        const double r = std::sqrt(sq_dist(y(j), c.data(), d));
        if (r <= 1e-14 * spread) {
          coincident += masses[j];
          continue;
        }
        const double w = masses[j] / r;
        wsum += w;
        for (int a = 0; a < d; ++a) {
          next[a] += w * y(j)[a];
          grad[a] += w * (y(j)[a] - c[a]);
        }
      }
      if (wsum == 0.0) break;
      double pull = 0.0;
      for (double g : grad) pull += g * g;
      pull = std::sqrt(pull);
      if (pull <= coincident) break;  // subgradient contains zero
      const double lambda = coincident > 0.0 ? coincident / pull : 0.0;
      double step = 0.0;
      for (int a = 0; a < d; ++a) {
        const double t = (1.0 - lambda) * next[a] / wsum + lambda * c[a];
        step += (t - c[a]) * (t - c[a]);
        c[a] = t;
      }
      if (std::sqrt(step) <= 1e-10 * spread) break;
    }
    return c;
  }

  // Damped Newton steps with backtracking on a convex objective; falls back
  // to the gradient direction when the Hessian is unusable.
  auto objective = [&](const std::vector<double>& x) {
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) s += masses[j] * dist_pow(y(j), x.data(), d, p);
    return s;
  };
  const double grad_tol = 1e-10 * total * pow_nonneg(spread, p - 1.0);
  double f = objective(c);
  std::vector<double> hess(static_cast<std::size_t>(d) * d), dir(d);
  for (int it = 0; it < 1000; ++it) {
    std::fill(grad.begin(), grad.end(), 0.0);
    std::fill(hess.begin(), hess.end(), 0.0);
    for (std::size_t j = 0; j < m; ++j) {
      const double r2 = sq_dist(y(j), c.data(), d);
      if (r2 == 0.0) continue;
      const double w = masses[j] * p * pow_from_sq(r2, p - 2.0);
      const double w2 = w * (p - 2.0) / r2;
      for (int a = 0; a < d; ++a) {
        const double ra = c[a] - y(j)[a];
        grad[a] += w * ra;
        hess[a * d + a] += w;
        for (int b = 0; b < d; ++b) hess[a * d + b] += w2 * ra * (c[b] - y(j)[b]);
      }
    }
    double gn = 0.0;
    for (double g : grad) gn += g * g;
    gn = std::sqrt(gn);
    if (gn <= grad_tol) break;

    // solve hess * dir = -grad by Gaussian elimination with partial pivoting
    std::vector<double> A(hess);
    for (int a = 0; a < d; ++a) dir[a] = -grad[a];
    bool newton = true;
    for (int col = 0; col < d && newton; ++col) {
      int piv = col;
      for (int r = col + 1; r < d; ++r)
        if (std::abs(A[r * d + col]) > std::abs(A[piv * d + col])) piv = r;
      if (!(std::abs(A[piv * d + col]) > 0.0) || !std::isfinite(A[piv * d + col])) {
        newton = false;
        break;
      }
      if (piv != col) {
        for (int b = 0; b < d; ++b) std::swap(A[col * d + b], A[piv * d + b]);
        std::swap(dir[col], dir[piv]);
      }
      for (int r = col + 1; r < d; ++r) {
        const double t = A[r * d + col] / A[col * d + col];
        for (int b = col; b < d; ++b) A[r * d + b] -= t * A[col * d + b];
        dir[r] -= t * dir[col];
      }
    }
    if (newton) {
      for (int r = d - 1; r >= 0; --r) {
        double v = dir[r];
        for (int b = r + 1; b < d; ++b) v -= A[r * d + b] * dir[b];
        dir[r] = v / A[r * d + r];
      }
    }
    double slope = 0.0;
    for (int a = 0; a < d; ++a) slope += dir[a] * grad[a];
    if (!newton || !(slope < 0.0)) {
      for (int a = 0; a < d; ++a) dir[a] = -grad[a] * spread / gn;
      slope = -gn * spread;
    }
    double t = 1.0;
    bool moved = false;
    while (t > 1e-20) {
      for (int a = 0; a < d; ++a) next[a] = c[a] + t * dir[a];
      const double fn = objective(next);
      if (fn <= f + 1e-4 * t * slope) {
        moved = fn < f || t == 1.0;
        c = next;
        f = fn;
        break;
      }
      t *= 0.5;
    }
    if (!moved) break;
  }
  return c;
}

PierceOutput pierce_greedy(const GridDensity& grid, int n, double theta, double p) {
  check_grid(grid);
  const int d = grid.d;
  require(n >= 2, ErrorCode::InvalidArgument, "pierce_greedy needs n >= 2");
  require(p >= 1.0, ErrorCode::InvalidArgument, "p must be >= 1");
  if (p < d)
    require(theta > p * d / (d - p), ErrorCode::InvalidArgument, "theta must exceed p d / (d - p)");
  else
    require(theta >= 1.0, ErrorCode::InvalidArgument, "theta must be >= 1");

  const double T = grid.total;
  const double M = moment(grid, theta) / T;
  const double share = T / n;
  const std::size_t cells = grid.cell_count();
  std::vector<double> rem(grid.masses);
  std::vector<double> centers(cells * d);
  for (std::size_t c = 0; c < cells; ++c) grid.center(c, &centers[c * d]);
  double remaining = T;

  PierceOutput out;
  std::vector<double> pts;
  pts.reserve(static_cast<std::size_t>(n) * d);
  std::vector<std::size_t> list, child;
  std::vector<double> lo(d), child_mass(std::size_t{1} << d);
  std::vector<double> tw, tx;
  for (int k = 1; k < n; ++k) {
    PierceStep step;
    const double r = std::pow(2.0 * n * M / (n - k), 1.0 / theta);
    step.radius = r;
    step.remaining_mass = remaining;

    list.clear();
    double inside = 0.0;
    for (std::size_t c = 0; c < cells; ++c) {
      if (rem[c] <= 0.0) continue;
      bool in = true;
      for (int a = 0; a < d && in; ++a) in = std::abs(centers[c * d + a]) <= r;
      if (in) {
        list.push_back(c);
        inside += rem[c];
      }
    }
    require(inside >= share * (1.0 - 1e-12), ErrorCode::InsufficientMass,
            "restricted mass below one share at step " + std::to_string(k));

    // dyadic descent into the heaviest child
    std::fill(lo.begin(), lo.end(), -r);
    double side = 2.0 * r;
    while (list.size() > 1) {
      std::fill(child_mass.begin(), child_mass.end(), 0.0);
      auto child_of = [&](std::size_t c) {
        std::size_t o = 0;
        for (int a = 0; a < d; ++a)
          if (centers[c * d + a] >= lo[a] + 0.5 * side) o |= std::size_t{1} << a;
        return o;
      };
      for (std::size_t c : list) child_mass[child_of(c)] += rem[c];
      const std::size_t best =
          static_cast<std::size_t>(std::max_element(child_mass.begin(), child_mass.end()) - child_mass.begin());
      if (child_mass[best] < share) break;
      child.clear();
      for (std::size_t c : list)
        if (child_of(c) == best) child.push_back(c);
      list.swap(child);
      for (int a = 0; a < d; ++a)
        if ((best >> a) & 1) lo[a] += 0.5 * side;
      side *= 0.5;
    }

    // take one share in flat-index order, splitting the last cell
    double need = share;
    tw.clear();
    tx.clear();
    std::vector<double> bmin(d, std::numeric_limits<double>::infinity()), bmax(d, -std::numeric_limits<double>::infinity());
    for (std::size_t c : list) {
      if (need <= 0.0) break;
      const double take = std::min(rem[c], need);
      if (take <= 0.0) continue;
      rem[c] -= take;
      need -= take;
      tw.push_back(take);
      tx.insert(tx.end(), &centers[c * d], &centers[c * d] + d);
      for (int a = 0; a < d; ++a) {
        bmin[a] = std::min(bmin[a], centers[c * d + a] - 0.5 * grid.h);
        bmax[a] = std::max(bmax[a], centers[c * d + a] + 0.5 * grid.h);
      }
    }
    require(need <= share * 1e-12, ErrorCode::InsufficientMass, "final cube holds less than one share");
    remaining -= share;
    double diam2 = 0.0;
    for (int a = 0; a < d; ++a) diam2 += (bmax[a] - bmin[a]) * (bmax[a] - bmin[a]);
    step.diameter = std::sqrt(diam2);
    step.bound = 4.0 * std::sqrt(static_cast<double>(d)) * r *
                     std::pow(n * step.remaining_mass / T, -1.0 / d) +
                 grid.h * std::sqrt(static_cast<double>(d));
    const auto x = p_centroid(tw, tx, d, p);
    pts.insert(pts.end(), x.begin(), x.end());
    out.steps.push_back(step);
  }
  pts.insert(pts.end(), d, 0.0);  // the origin carries the remainder
  out.cloud = PointCloud(d, std::move(pts), T);
  return out;
}

HexRegion HexRegion::disk(double cx, double cy, double radius) {
  require(radius > 0.0, ErrorCode::InvalidArgument, "disk radius must be positive");
  HexRegion r;
  r.kind = Kind::Disk;
  r.cx = cx;
  r.cy = cy;
  r.radius = radius;
  r.square = Box({cx - radius, cy - radius}, {cx + radius, cy + radius});
  return r;
}

double HexRegion::area() const {
  return kind == Kind::Disk ? std::numbers::pi * radius * radius : square.volume();
}

bool HexRegion::contains(double x, double y) const {
  if (kind == Kind::Disk) return std::hypot(x - cx, y - cy) <= radius;
  return x >= square.lo[0] && x <= square.hi[0] && y >= square.lo[1] && y <= square.hi[1];
}

double HexRegion::boundary_distance(double x, double y) const {
  if (kind == Kind::Disk) return std::max(0.0, radius - std::hypot(x - cx, y - cy));
  const double pt[2] = {x, y};
  return square.boundary_distance(pt);
}

double HexRegion::arc_key(double x, double y) const {
  if (kind == Kind::Disk) {
    const double t = std::atan2(y - cy, x - cx);
    return t < 0.0 ? t + 2.0 * std::numbers::pi : t;
  }
  const double x0 = square.lo[0], y0 = square.lo[1], x1 = square.hi[0], y1 = square.hi[1];
  const double W = x1 - x0, H = y1 - y0;
  const std::array<double, 4> dist{y - y0, x1 - x, y1 - y, x - x0};
  const std::array<double, 4> key{x - x0, W + (y - y0), W + H + (x1 - x), 2 * W + H + (y1 - y)};
  const auto side = std::min_element(dist.begin(), dist.end()) - dist.begin();
  return key[side];
}

namespace {

using Polygon = std::vector<std::array<double, 2>>;

double polygon_area(const Polygon& poly) {
  double s = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const auto& a = poly[i];
    const auto& b = poly[(i + 1) % poly.size()];
    s += a[0] * b[1] - a[1] * b[0];
  }
  return 0.5 * std::abs(s);
}

// Area of an axis-aligned square intersected with a convex counterclockwise polygon.
double clipped_area(double x0, double y0, double x1, double y1, const Polygon& hull) {
  Polygon poly{{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}, next;
  for (std::size_t e = 0; e < hull.size() && !poly.empty(); ++e) {
    const auto& a = hull[e];
    const auto& b = hull[(e + 1) % hull.size()];
    auto side = [&](const std::array<double, 2>& q) {
      return (b[0] - a[0]) * (q[1] - a[1]) - (b[1] - a[1]) * (q[0] - a[0]);
    };
    next.clear();
    for (std::size_t i = 0; i < poly.size(); ++i) {
      const auto& P = poly[i];
      const auto& Q = poly[(i + 1) % poly.size()];
      const double sp = side(P), sq = side(Q);
      if (sp >= 0.0) next.push_back(P);
      if ((sp >= 0.0) != (sq >= 0.0)) {
        const double t = sp / (sp - sq);
        next.push_back({P[0] + t * (Q[0] - P[0]), P[1] + t * (Q[1] - P[1])});
      }
    }
    poly.swap(next);
  }
  return poly.size() < 3 ? 0.0 : polygon_area(poly);
}

HexOutput hex_with_offset(const GridDensity& grid, const HexRegion& region, int n, double p, double margin,
                          double fx, double fy) {
  const double s = std::sqrt(2.0 * region.area() / (3.0 * kSqrt3 * n));  // side length
  const double diam = 2.0 * s;
  const double bx0 = region.square.lo[0], by0 = region.square.lo[1];
  const double bx1 = region.square.hi[0], by1 = region.square.hi[1];
  const double ox = bx0 + fx * 3.0 * s, oy = by0 + fy * kSqrt3 * s;

  // flat-top lattice: columns 1.5 s apart, odd columns shifted by half a row
  std::vector<std::array<double, 2>> centers;
  const int i0 = static_cast<int>(std::floor((bx0 - ox) / (1.5 * s))) - 1;
  const int i1 = static_cast<int>(std::ceil((bx1 - ox) / (1.5 * s))) + 1;
  const int j0 = static_cast<int>(std::floor((by0 - oy) / (kSqrt3 * s))) - 1;
  const int j1 = static_cast<int>(std::ceil((by1 - oy) / (kSqrt3 * s))) + 1;
  for (int i = i0; i <= i1; ++i) {
    for (int j = j0; j <= j1; ++j) {
      const double x = ox + 1.5 * s * i;
      const double y = oy + kSqrt3 * s * (j + ((i % 2 + 2) % 2 == 1 ? 0.5 : 0.0));
      bool ok = region.contains(x, y) && (margin == 0.0 || region.boundary_distance(x, y) > margin * diam);
      for (int v = 0; v < 6 && ok; ++v) {
        const double a = std::numbers::pi / 3.0 * v;
        ok = region.contains(x + s * std::cos(a), y + s * std::sin(a));
      }
      if (ok) centers.push_back({x, y});
    }
  }
  const int k = static_cast<int>(centers.size());
  require(k <= n, ErrorCode::Internal, "more interior hexagons than points");

  HexOutput out;
  out.interior = k;
  const double h = grid.h;
  const double cell_area = h * h;
  std::vector<double> residual(grid.masses);
  std::vector<double> pts;
  pts.reserve(2 * static_cast<std::size_t>(n));
  double cost_p = 0.0;
  Polygon hull(6);
  double cc[2];
  for (const auto& c : centers) {
    for (int v = 0; v < 6; ++v) {
      const double a = std::numbers::pi / 3.0 * v;
      hull[v] = {c[0] + s * std::cos(a), c[1] + s * std::sin(a)};
    }
    const int ia = std::max(0, static_cast<int>(std::floor((c[0] - s - grid.origin[0]) / h)));
    const int ib = std::min(grid.shape[0] - 1, static_cast<int>(std::floor((c[0] + s - grid.origin[0]) / h)));
    const double hy = 0.5 * kSqrt3 * s;
    const int ja = std::max(0, static_cast<int>(std::floor((c[1] - hy - grid.origin[1]) / h)));
    const int jb = std::min(grid.shape[1] - 1, static_cast<int>(std::floor((c[1] + hy - grid.origin[1]) / h)));
    for (int i = ia; i <= ib; ++i) {
      for (int j = ja; j <= jb; ++j) {
        const std::size_t f = static_cast<std::size_t>(i) * grid.shape[1] + j;
        if (grid.masses[f] <= 0.0) continue;
        const double x0 = grid.origin[0] + i * h, y0 = grid.origin[1] + j * h;
        const double area = clipped_area(x0, y0, x0 + h, y0 + h, hull);
        if (area <= 0.0) continue;
        const double m = grid.masses[f] * std::min(1.0, area / cell_area);
        residual[f] -= m;
        grid.center(f, cc);
        cost_p += m * dist_pow(cc, c.data(), 2, p);
      }
    }
    pts.push_back(c[0]);
    pts.push_back(c[1]);
  }

  const int pieces = n - k;
  if (pieces > 0) {
    struct StripCell {
      double key;
      std::size_t flat;
      double mass;
    };
    std::vector<StripCell> strip;
    double strip_mass = 0.0;
    for (std::size_t f = 0; f < grid.cell_count(); ++f) {
      if (grid.masses[f] <= 0.0) continue;
      const double r = residual[f];
      if (r <= 1e-14 * grid.masses[f]) continue;
      grid.center(f, cc);
      strip.push_back({region.arc_key(cc[0], cc[1]), f, r});
      strip_mass += r;
    }
    require(strip.size() >= 4 * static_cast<std::size_t>(pieces), ErrorCode::TooCoarse,
            "grid too coarse for " + std::to_string(pieces) + " strip pieces");
    std::sort(strip.begin(), strip.end(),
              [](const StripCell& a, const StripCell& b) { return a.key != b.key ? a.key < b.key : a.flat < b.flat; });
    const double per = strip_mass / pieces;
    std::size_t pos = 0;
    double left = strip[0].mass;
    std::vector<double> tw, tx;
    for (int q = 0; q < pieces; ++q) {
      tw.clear();
      tx.clear();
      double need = q + 1 == pieces ? std::numeric_limits<double>::infinity() : per;
      while (pos < strip.size() && need > 0.0) {
        const double take = std::min(left, need);
        grid.center(strip[pos].flat, cc);
        tw.push_back(take);
        tx.push_back(cc[0]);
        tx.push_back(cc[1]);
        need -= take;
        left -= take;
        if (left <= 0.0 && ++pos < strip.size()) left = strip[pos].mass;
      }
      double mass = 0.0;
      for (double w : tw) mass += w;
      out.piece_masses.push_back(mass);
      const auto x = p_centroid(tw, tx, 2, p);
      for (std::size_t t = 0; t < tw.size(); ++t) cost_p += tw[t] * dist_pow(&tx[2 * t], x.data(), 2, p);
      pts.push_back(x[0]);
      pts.push_back(x[1]);
    }
  }
  out.cloud = PointCloud(2, std::move(pts), grid.total);
  out.construction_cost_p = cost_p;
  return out;
}

}  // namespace

HexOutput hex_2d(const GridDensity& grid, const HexRegion& region, int n, double p, double margin) {
  require(grid.d == 2, ErrorCode::DimensionMismatch, "hex_2d needs d = 2");
  require(n >= 1, ErrorCode::InvalidArgument, "n must be >= 1");
  require(p >= 1.0, ErrorCode::InvalidArgument, "p must be >= 1");
  require(margin >= 0.0, ErrorCode::InvalidArgument, "margin must be >= 0");
  check_grid(grid);
  HexOutput best;
  bool have = false;
  for (int t = 0; t < 25; ++t) {
    auto cand = hex_with_offset(grid, region, n, p, margin, (t / 5) / 5.0, (t % 5) / 5.0);
    cand.offset_index = t;
    if (!have || cand.construction_cost_p < best.construction_cost_p) {
      best = std::move(cand);
      have = true;
    }
  }
  return best;
}

namespace {

double relative_decrease(double prev, double cur) { return prev > 0.0 ? (prev - cur) / prev : 0.0; }

PointCloud initial_cloud(const GridDensity& grid, int n, const OptimizerConfig& cfg, std::mt19937_64& gen) {
  const int d = grid.d;
  if (cfg.init == InitKind::User) {
    const auto& c = *cfg.user_init;
    require(c.d == d, ErrorCode::DimensionMismatch, "initial cloud dimension differs from the grid");
    require(static_cast<int>(c.size()) == n, ErrorCode::InvalidArgument, "initial cloud has the wrong size");
    return PointCloud(d, c.coords, grid.total);
  }
  std::vector<double> x(static_cast<std::size_t>(n) * d);
  std::vector<int> idx(d);
  if (cfg.init == InitKind::RhoSample) {
    std::vector<double> cum(grid.cell_count());
    std::partial_sum(grid.masses.begin(), grid.masses.end(), cum.begin());
    for (int i = 0; i < n; ++i) {
      const double u = uniform01(gen) * cum.back();
      auto f = static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), u) - cum.begin());
      f = std::min(f, cum.size() - 1);
      while (grid.masses[f] <= 0.0 && f > 0) --f;
      grid.unflatten(f, idx.data());
      for (int a = 0; a < d; ++a) x[i * d + a] = grid.origin[a] + grid.h * (idx[a] + uniform01(gen));
    }
  } else {
    std::vector<double> lo(d, std::numeric_limits<double>::infinity()), hi(d, -std::numeric_limits<double>::infinity());
    for (std::size_t f = 0; f < grid.cell_count(); ++f) {
      if (grid.masses[f] <= 0.0) continue;
      grid.unflatten(f, idx.data());
      for (int a = 0; a < d; ++a) {
        lo[a] = std::min(lo[a], grid.origin[a] + grid.h * idx[a]);
        hi[a] = std::max(hi[a], grid.origin[a] + grid.h * (idx[a] + 1));
      }
    }
    int k = 1;
    while (std::pow(static_cast<double>(k), d) < n) ++k;
    std::size_t slots = 1;
    for (int a = 0; a < d; ++a) slots *= static_cast<std::size_t>(k);
    std::vector<std::size_t> order(slots);
    std::iota(order.begin(), order.end(), 0);
    for (int i = 0; i < n; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(uniform01(gen) * static_cast<double>(slots - i));
      std::swap(order[i], order[std::min(j, slots - 1)]);
      std::size_t t = order[i];
      for (int a = d - 1; a >= 0; --a) {
        const int li = static_cast<int>(t % k);
        t /= k;
        x[i * d + a] = lo[a] + (hi[a] - lo[a]) * (li + uniform01(gen)) / k;
      }
    }
  }
  return PointCloud(d, std::move(x), grid.total);
}

// Moves every point to the p-centroid of the cell centers sent to it.
void centroid_step(const GridDensity& grid, PointCloud& cloud, const std::vector<std::vector<std::pair<std::size_t, double>>>& groups,
                   double p) {
  const int d = grid.d;
  std::vector<double> w, x, c(d);
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const auto& g = groups[i];
    if (g.empty()) continue;
    w.clear();
    x.clear();
    for (const auto& [cell, mass] : g) {
      grid.center(cell, c.data());
      w.push_back(mass);
      x.insert(x.end(), c.begin(), c.end());
    }
    const auto y = p_centroid(w, x, d, p);
    std::copy(y.begin(), y.end(), cloud.point(i));
  }
}

double capacity_error(const GridDensity& grid, const PointCloud& cloud, const TransportPlan& plan, double p) {
  if (grid.d == 1) return w1d_exact(grid, cloud, p, CellModel::Spread);
  return spread_cost(grid, cloud, plan, p);
}

double classical_error(const GridDensity& grid, const PointCloud& cloud, std::span<const int> site, double p) {
  double s = 0.0;
  for (std::size_t f = 0; f < grid.cell_count(); ++f)
    if (site[f] >= 0) s += grid.masses[f] * cell_average_cost(grid, f, cloud.point(site[f]), p);
  return std::pow(std::max(s, 0.0), 1.0 / p);
}

struct RestartOutcome {
  PointCloud cloud;
  double cost = 0.0;
  std::vector<double> trace;
  TransportPlan plan;
  std::vector<int> site;
};

RestartOutcome run_capacity(const GridDensity& grid, int n, double p, const OptimizerConfig& cfg,
                            std::mt19937_64& gen) {
  RestartOutcome out;
  PointCloud cloud = initial_cloud(grid, n, cfg, gen);
  CapacityWorkspace ws;
  std::vector<std::vector<std::pair<std::size_t, double>>> groups(n);
  for (int it = 0; it < cfg.max_iters; ++it) {
    auto res = solve_uniform_capacity(grid, cloud, p, cfg.solver, &ws);
    if (!out.trace.empty() && res.cost > out.trace.back() * (1.0 + 1e-12)) break;  // rejected
    out.trace.push_back(res.cost);
    out.cloud = cloud;
    out.cost = res.cost;
    out.plan = std::move(res.plan);
    const std::size_t t = out.trace.size();
    if (out.cost == 0.0) break;
    if (t >= 2 && relative_decrease(out.trace[t - 2], out.trace[t - 1]) < cfg.tol) break;
    for (auto& g : groups) g.clear();
    for (const auto& e : out.plan.entries) groups[e.point].push_back({e.cell, e.mass});
    centroid_step(grid, cloud, groups, p);
  }
  return out;
}

RestartOutcome run_classical(const GridDensity& grid, int n, double p, const OptimizerConfig& cfg,
                             std::mt19937_64& gen) {
  RestartOutcome out;
  PointCloud cloud = initial_cloud(grid, n, cfg, gen);
  const int d = grid.d;
  std::vector<double> c(d);
  std::vector<std::vector<std::pair<std::size_t, double>>> groups(n);
  for (int it = 0; it < cfg.max_iters; ++it) {
    auto site = nearest_sites(grid, cloud);
    std::vector<double> contrib(grid.cell_count(), 0.0);
    double s = 0.0;
    for (std::size_t f = 0; f < grid.cell_count(); ++f) {
      if (site[f] < 0) continue;
      grid.center(f, c.data());
      contrib[f] = grid.masses[f] * dist_pow(c.data(), cloud.point(site[f]), d, p);
      s += contrib[f];
    }
    const double cost = std::pow(std::max(s, 0.0), 1.0 / p);
    if (!out.trace.empty() && cost > out.trace.back() * (1.0 + 1e-12)) break;
    out.trace.push_back(cost);
    out.cloud = cloud;
    out.cost = cost;
    out.site = site;
    const std::size_t t = out.trace.size();
    if (cost == 0.0) break;
    if (t >= 2 && relative_decrease(out.trace[t - 2], out.trace[t - 1]) < cfg.tol) break;
    for (auto& g : groups) g.clear();
    for (std::size_t f = 0; f < grid.cell_count(); ++f)
      if (site[f] >= 0) groups[site[f]].push_back({f, grid.masses[f]});
    centroid_step(grid, cloud, groups, p);
    // respawn empty points at the costliest cells
    std::vector<std::size_t> worst;
    for (int i = 0; i < n; ++i) {
      if (!groups[i].empty()) continue;
      if (worst.empty()) {
        worst.resize(grid.cell_count());
        std::iota(worst.begin(), worst.end(), 0);
        std::stable_sort(worst.begin(), worst.end(),
                         [&](std::size_t a, std::size_t b) { return contrib[a] > contrib[b]; });
        std::reverse(worst.begin(), worst.end());  // pop from the back
      }
      if (worst.empty() || contrib[worst.back()] <= 0.0) break;
      grid.center(worst.back(), cloud.point(i));
      worst.pop_back();
    }
  }
  return out;
}

template <class Runner>
QuantizerResult run_restarts(const GridDensity& grid, int n, double p, const OptimizerConfig& cfg, Method method,
                             Runner runner) {
  cfg.validate();
  check_grid(grid);
  require(n >= 1, ErrorCode::InvalidArgument, "n must be >= 1");
  require(p >= 1.0, ErrorCode::InvalidArgument, "p must be >= 1");
  const int restarts = cfg.init == InitKind::User ? 1 : cfg.restarts;
  std::vector<RestartOutcome> outcomes(restarts);
  detail::parallel_for(restarts, worker_threads(), [&](int r) {
    std::mt19937_64 gen(stream_seed(cfg.seed, static_cast<std::uint64_t>(r)));
    outcomes[r] = runner(grid, n, p, cfg, gen);
  });
  std::size_t best = 0;
  for (std::size_t r = 1; r < outcomes.size(); ++r)
    if (outcomes[r].cost < outcomes[best].cost) best = r;
  auto& o = outcomes[best];
  QuantizerResult res;
  res.method = method;
  res.seed_used = cfg.seed;
  res.restarts = restarts;
  res.iterations = static_cast<int>(o.trace.size());
  res.cost = o.cost;
  res.error = method == Method::LloydClassical ? classical_error(grid, o.cloud, o.site, p)
                                               : capacity_error(grid, o.cloud, o.plan, p);
  res.cloud = std::move(o.cloud);
  res.trace = std::move(o.trace);
  return res;
}

}  // namespace

QuantizerResult lloyd_capacity(const GridDensity& grid, int n, double p, const OptimizerConfig& cfg) {
  return run_restarts(grid, n, p, cfg, Method::LloydCapacity, run_capacity);
}

QuantizerResult lloyd_classical(const GridDensity& grid, int n, double p, const OptimizerConfig& cfg) {
  return run_restarts(grid, n, p, cfg, Method::LloydClassical, run_classical);
}

QuantizerResult evaluate_capacity(const GridDensity& grid, const PointCloud& cloud, double p,
                                  const SolverOptions& solver) {
  QuantizerResult res;
  if (grid.d == 1) {
    res.cost = w1d_exact(grid, cloud, p, CellModel::Atom);
    res.error = w1d_exact(grid, cloud, p, CellModel::Spread);
  } else {
    const auto r = solve_uniform_capacity(grid, cloud, p, solver);
    res.cost = r.cost;
    res.error = spread_cost(grid, cloud, r.plan, p);
  }
  res.cloud = cloud;
  res.trace = {res.cost};
  res.iterations = 0;
  return res;
}

QuantizerResult evaluate_classical(const GridDensity& grid, const PointCloud& cloud, double p) {
  QuantizerResult res;
  res.cost = nearest_assignment_cost(grid, cloud, p);
  res.error = classical_error(grid, cloud, nearest_sites(grid, cloud), p);
  res.cloud = cloud;
  res.method = Method::LloydClassical;
  res.trace = {res.cost};
  return res;
}

QuantizerResult best_quantizer(const GridDensity& grid, int n, double p, std::span<const Method> methods,
                               const OptimizerConfig& cfg, const BestOptions& options) {
  require(!methods.empty(), ErrorCode::InvalidArgument, "no methods requested");
  const bool classical = std::find(methods.begin(), methods.end(), Method::LloydClassical) != methods.end();
  require(!classical || methods.size() == 1, ErrorCode::InvalidArgument,
          "lloyd_classical estimates a different error and cannot be mixed with other methods");

  std::optional<QuantizerResult> best;
  std::vector<std::pair<Method, double>> costs;
  std::string failures;
  std::optional<Error> first_error;
  for (Method m : methods) {
    try {
      QuantizerResult r;
      std::optional<PointCloud> built;
      switch (m) {
        case Method::Midpoint1d:
          require(grid.d == 1, ErrorCode::DimensionMismatch, "midpoint_1d needs d = 1");
          built = midpoint_1d(n);
          built->weight_each = grid.total / n;
          break;
        case Method::Chunk1d: built = chunk_1d(grid, n, p); break;
        case Method::PierceGreedy: built = pierce_greedy(grid, n, options.theta, p).cloud; break;
        case Method::Hex2d: built = hex_2d(grid, options.region, n, p, options.hex_margin).cloud; break;
        case Method::LloydCapacity: r = lloyd_capacity(grid, n, p, cfg); break;
        case Method::LloydClassical: r = lloyd_classical(grid, n, p, cfg); break;
      }
      if (built) {
        if (options.polish) {
          OptimizerConfig warm = cfg;
          warm.init = InitKind::User;
          warm.user_init = *built;
          warm.restarts = 1;
          r = lloyd_capacity(grid, n, p, warm);
        } else {
          r = evaluate_capacity(grid, *built, p, cfg.solver);
          r.seed_used = cfg.seed;
        }
        r.restarts = 1;
      }
      r.method = m;
      costs.push_back({m, r.cost});
      if (!best || r.cost < best->cost) best = std::move(r);
    } catch (const Error& e) {
      if (!first_error) first_error = e;
      failures += std::string(to_string(m)) + ": " + e.detail() + "; ";
    }
  }
  if (!best) fail(first_error->code(), "all methods failed: " + failures);
  best->method_costs = std::move(costs);
  return *best;
}

}  // namespace eqq

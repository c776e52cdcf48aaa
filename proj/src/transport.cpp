#include "eqq/transport.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss.hpp>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "eqq/errors.hpp"
#include "eqq/geometry.hpp"
#include "kdtree.hpp"
#include "network_simplex.hpp"

namespace eqq {

namespace {

constexpr double kUnitBudget = 4503599627370496.0;  // 2^52
constexpr std::int64_t kJitter = 256;
constexpr double kScaledBudget = 4611686018427387904.0;  // 2^62

// Largest-remainder rounding of values * scale to integers summing to target.
std::vector<std::int64_t> round_units(std::span<const double> values, double scale, std::int64_t target) {
  const std::size_t k = values.size();
  std::vector<std::int64_t> units(k);
  std::vector<double> frac(k);
  std::int64_t sum = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const double x = values[i] * scale;
    units[i] = static_cast<std::int64_t>(std::floor(x));
    frac[i] = x - static_cast<double>(units[i]);
    sum += units[i];
  }
  std::int64_t rest = target - sum;
  if (rest != 0) {
    std::vector<std::size_t> idx(k);
    std::iota(idx.begin(), idx.end(), 0);
    if (rest > 0) {
      std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
      for (std::size_t t = 0; rest > 0; t = (t + 1) % k, --rest) ++units[idx[t]];
    } else {
      std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return frac[a] < frac[b]; });
      for (std::size_t t = 0; rest < 0; t = (t + 1) % k) {
        if (units[idx[t]] > 0) {
          --units[idx[t]];
          ++rest;
        }
      }
    }
  }
  return units;
}

std::uint64_t morton(std::span<const std::uint32_t> q) {
  const int d = static_cast<int>(q.size());
  const int bits = std::max(1, 63 / d);
  std::uint64_t code = 0;
  for (int b = bits - 1; b >= 0; --b)
    for (int k = 0; k < d; ++k) code = (code << 1) | ((q[k] >> b) & 1u);
  return code;
}

std::vector<std::uint32_t> quantize_position(const double* x, const Box& box, int d, int levels) {
  std::vector<std::uint32_t> q(d);
  for (int k = 0; k < d; ++k) {
    const double ext = box.hi[k] - box.lo[k];
    double t = ext > 0.0 ? (x[k] - box.lo[k]) / ext : 0.0;
    t = std::clamp(t, 0.0, 1.0 - 1e-12);
    q[k] = static_cast<std::uint32_t>(t * levels);
  }
  return q;
}

// Order of rows of `coords` along a Morton curve over `box`.
std::vector<int> morton_order(std::span<const double> coords, int d, const Box& box) {
  const int rows = static_cast<int>(coords.size() / d);
  const int bits = std::min(20, std::max(1, 63 / d));
  const int levels = 1 << bits;
  std::vector<std::uint64_t> codes(rows);
  for (int r = 0; r < rows; ++r) codes[r] = morton(quantize_position(&coords[static_cast<std::size_t>(r) * d], box, d, levels));
  std::vector<int> order(rows);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return codes[a] < codes[b]; });
  return order;
}

Box joint_box(std::span<const double> a, std::span<const double> b, int d) {
  Box box = Box::cube(d, std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity());
  for (auto span : {a, b}) {
    for (std::size_t r = 0; r < span.size() / d; ++r) {
      for (int k = 0; k < d; ++k) {
        box.lo[k] = std::min(box.lo[k], span[r * d + k]);
        box.hi[k] = std::max(box.hi[k], span[r * d + k]);
      }
    }
  }
  return box;
}

struct PairCost {
  const double* src = nullptr;
  const double* snk = nullptr;
  int d = 1;
  double p = 2.0;
  double operator()(int i, int j) const {
    return dist_pow(src + static_cast<std::size_t>(i) * d, snk + static_cast<std::size_t>(j) * d, d, p);
  }
};

}  // namespace

PointCloud::PointCloud(int d_, std::vector<double> coords_, double total) : d(d_), coords(std::move(coords_)) {
  require(d >= 1, ErrorCode::InvalidArgument, "cloud dimension must be >= 1");
  require(coords.size() % static_cast<std::size_t>(d) == 0, ErrorCode::DimensionMismatch,
          "coordinate count is not a multiple of d");
  require(!coords.empty(), ErrorCode::InvalidArgument, "cloud must contain at least one point");
  weight_each = total / static_cast<double>(size());
  check();
}

void PointCloud::check() const {
  require(d >= 1 && size() >= 1, ErrorCode::InvalidArgument, "cloud must contain at least one point");
  for (double v : coords) require(std::isfinite(v), ErrorCode::InvalidArgument, "cloud point is not finite");
  require(weight_each > 0.0, ErrorCode::InvalidArgument, "cloud weight must be positive");
}

namespace {

// One transportation problem between nonzero grid cells (Morton order) and
// the sinks.
struct Level {
  int d = 0;
  std::vector<int> shape;
  std::vector<double> origin;
  double h = 1.0;
  std::vector<std::int64_t> cell_units;  // per flat cell at this level
  std::vector<std::size_t> src_cell;     // source -> flat cell
  std::vector<int> src_of_cell;          // flat cell -> source or -1
  std::vector<double> src_xy;
  std::vector<std::int64_t> supply;
  std::unique_ptr<detail::NetworkSimplex<PairCost>> simplex;
  std::vector<int> cand;
  std::size_t cursor = 0;

  int sources() const { return static_cast<int>(supply.size()); }
};

std::size_t flat_of(std::span<const int> idx, std::span<const int> shape) {
  std::size_t f = 0;
  for (std::size_t k = 0; k < shape.size(); ++k) f = f * static_cast<std::size_t>(shape[k]) + static_cast<std::size_t>(idx[k]);
  return f;
}

void unflat(std::size_t f, std::span<const int> shape, std::span<int> idx) {
  for (int k = static_cast<int>(shape.size()) - 1; k >= 0; --k) {
    idx[k] = static_cast<int>(f % static_cast<std::size_t>(shape[k]));
    f /= static_cast<std::size_t>(shape[k]);
  }
}

std::unique_ptr<Level> make_level(int d, std::vector<int> shape, std::vector<double> origin, double h,
                                  std::vector<std::int64_t> units) {
  auto lv = std::make_unique<Level>();
  lv->d = d;
  lv->shape = std::move(shape);
  lv->origin = std::move(origin);
  lv->h = h;
  lv->cell_units = std::move(units);
  std::vector<std::pair<std::uint64_t, std::size_t>> keyed;
  std::vector<int> idx(d);
  std::vector<std::uint32_t> q(d);
  for (std::size_t f = 0; f < lv->cell_units.size(); ++f) {
    if (lv->cell_units[f] <= 0) continue;
    unflat(f, lv->shape, idx);
    for (int k = 0; k < d; ++k) q[k] = static_cast<std::uint32_t>(idx[k]);
    keyed.push_back({morton(q), f});
  }
  std::sort(keyed.begin(), keyed.end());
  const std::size_t m = keyed.size();
  lv->src_cell.resize(m);
  lv->supply.resize(m);
  lv->src_xy.resize(m * d);
  lv->src_of_cell.assign(lv->cell_units.size(), -1);
  for (std::size_t r = 0; r < m; ++r) {
    const std::size_t f = keyed[r].second;
    lv->src_cell[r] = f;
    lv->supply[r] = lv->cell_units[f];
    lv->src_of_cell[f] = static_cast<int>(r);
    unflat(f, lv->shape, idx);
    for (int k = 0; k < d; ++k) lv->src_xy[r * d + k] = lv->origin[k] + lv->h * (idx[k] + 0.5);
  }
  return lv;
}

// Pivots on the most negative candidate arc of each block until a full pass
// over the candidate list finds nothing. Returns the number of pivots.
std::size_t price_candidates(Level& lv, int K, double eps, std::size_t max_pivots = SIZE_MAX) {
  auto& ns = *lv.simplex;
  const std::size_t total = lv.cand.size();
  if (total == 0) return 0;
  const std::size_t block = std::max<std::size_t>(static_cast<std::size_t>(std::sqrt(static_cast<double>(total))), 16);
  const int m = ns.sources();
  const auto& pi = ns.pi();
  const PairCost& cost = ns.cost();
  std::size_t pivots = 0;
  std::size_t pos = lv.cursor % total;
  while (true) {
    double best = -eps;
    int bi = -1, bj = -1;
    std::size_t cnt = 0;
    for (std::size_t scanned = 0; scanned < total; ++scanned) {
      const int i = static_cast<int>(pos / K);
      const int j = lv.cand[pos];
      const double rc = cost(i, j) + pi[i] - pi[m + j];
      if (rc < best && !ns.is_basic(i, j)) {
        best = rc;
        bi = i;
        bj = j;
      }
      if (++pos == total) pos = 0;
      if (++cnt == block) {
        if (bi >= 0) break;
        cnt = 0;
      }
    }
    if (bi < 0) break;
    ns.pivot(bi, bj);
    if (++pivots > max_pivots) break;
  }
  lv.cursor = pos;
  return pivots;
}

// Rebuilds candidate lists under the current potentials and counts violated
// optimality conditions.
std::size_t refresh_candidates(Level& lv, const detail::KdTree& tree, int K, double eps) {
  auto& ns = *lv.simplex;
  const int m = ns.sources();
  const int k_eff = std::min(K, ns.sinks());
  lv.cand.resize(static_cast<std::size_t>(m) * K);
  const auto& pi = ns.pi();
  std::vector<std::pair<double, int>> best;
  std::size_t violations = 0;
  for (int i = 0; i < m; ++i) {
    tree.k_best(&lv.src_xy[static_cast<std::size_t>(i) * lv.d], k_eff, best);
    int* row = &lv.cand[static_cast<std::size_t>(i) * K];
    for (int k = 0; k < K; ++k) row[k] = best[std::min(k, k_eff - 1)].second;
    if (best.front().first + pi[i] < -eps && !ns.is_basic(i, best.front().second)) ++violations;
  }
  return violations;
}

struct SolveContext {
  int d = 0;
  double p = 2.0;
  int K = 8;
  std::vector<double> sink_xy;
  std::vector<std::int64_t> demand;
  CapacityWorkspace* stats = nullptr;
};

double tolerance(const Level& lv, const SolveContext& cx) {
  const Box box = joint_box(lv.src_xy, cx.sink_xy, cx.d);
  return 1e-11 * std::max(pow_nonneg(box.diameter(), cx.p), 1e-300);
}

// Returns false once more than `pivot_limit` pivots were spent.
bool optimize(Level& lv, const SolveContext& cx, std::size_t pivot_limit = SIZE_MAX) {
  auto& ns = *lv.simplex;
  std::size_t spent = 0;
  const int n = ns.sinks();
  const double eps = tolerance(lv, cx);
  detail::KdTree tree(cx.sink_xy, cx.d, cx.p);
  std::vector<double> w(n);
  ns.compute_potentials();
  while (true) {
    const auto& pi = ns.pi();
    for (int j = 0; j < n; ++j) w[j] = pi[ns.sources() + j];
    tree.set_weights(w);
    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t violations = refresh_candidates(lv, tree, cx.K, eps);
    const auto t1 = std::chrono::steady_clock::now();
    if (cx.stats) {
      ++cx.stats->refreshes;
      cx.stats->refresh_seconds += std::chrono::duration<double>(t1 - t0).count();
    }
    if (violations == 0) return true;
    const std::size_t pv = price_candidates(lv, cx.K, eps, pivot_limit - std::min(spent, pivot_limit));
    ns.compute_potentials();
    if (cx.stats) {
      cx.stats->pivots += pv;
      cx.stats->pivot_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count();
    }
    spent += pv;
    if (spent > pivot_limit) return false;
  }
}

PairCost pair_cost(const Level& lv, const SolveContext& cx) {
  return PairCost{lv.src_xy.data(), cx.sink_xy.data(), cx.d, cx.p};
}

// Expands an optimal basis of the 2x-coarsened problem into a spanning tree
// of the fine problem: inside each coarse cell, its children are distributed
// over the coarse cell's tree arcs by a northwest-corner rule. Returns false
// if the result would not be strongly feasible.
bool prolongate(const Level& coarse, Level& fine, const SolveContext& cx) {
  const auto& cns = *coarse.simplex;
  const int d = cx.d;
  const int mc = cns.sources();
  const int n = cns.sinks();
  const int mf = fine.sources();

  // tree arcs of every coarse source
  std::vector<std::vector<std::pair<int, std::int64_t>>> arcs(mc);
  for (int u = 0; u < mc + n; ++u) {
    const int par = cns.parent(u);
    if (par < 0) continue;
    if (u < mc) arcs[u].push_back({par - mc, cns.flow(u)});
    else arcs[par].push_back({u - mc, cns.flow(u)});
  }

  std::vector<int> head(mf + n, -1);
  std::vector<int> e_next, e_to;
  std::vector<std::int64_t> e_flow;
  auto add_edge = [&](int a, int b, std::int64_t f) {
    for (auto [x, y] : {std::pair{a, b}, std::pair{b, a}}) {
      e_to.push_back(y);
      e_flow.push_back(f);
      e_next.push_back(head[x]);
      head[x] = static_cast<int>(e_to.size()) - 1;
    }
  };

  std::vector<int> cidx(d), fidx(d);
  std::vector<int> kids;
  std::vector<std::pair<double, int>> keyed;
  for (int c = 0; c < mc; ++c) {
    unflat(coarse.src_cell[c], coarse.shape, cidx);
    kids.clear();
    for (int o = 0; o < (1 << d); ++o) {
      bool inside = true;
      for (int k = 0; k < d; ++k) {
        fidx[k] = 2 * cidx[k] + ((o >> k) & 1);
        if (fidx[k] >= fine.shape[k]) inside = false;
      }
      if (!inside) continue;
      const int s = fine.src_of_cell[flat_of(fidx, fine.shape)];
      if (s >= 0) kids.push_back(s);
    }
    auto& sinks = arcs[c];
    if (kids.empty()) return false;
    if (sinks.size() > 1) {
      // children preferring the first sink go first
      std::vector<double> cost(sinks.size());
      keyed.clear();
      for (int s : kids) {
        const double* x = &fine.src_xy[static_cast<std::size_t>(s) * d];
        std::size_t best = 0;
        for (std::size_t t = 0; t < sinks.size(); ++t) {
          cost[t] = dist_pow(x, &cx.sink_xy[static_cast<std::size_t>(sinks[t].first) * d], d, cx.p);
          if (cost[t] < cost[best]) best = t;
        }
        const double second = sinks.size() > best + 1 ? cost[best + 1] : cost[best];
        keyed.push_back({static_cast<double>(best) * 1e300 + (cost[best] - second), s});
      }
      std::sort(keyed.begin(), keyed.end());
      for (std::size_t t = 0; t < kids.size(); ++t) kids[t] = keyed[t].second;
    }
    std::size_t a = 0, b = 0;
    std::int64_t rs = fine.supply[kids[0]], rd = sinks[0].second;
    while (true) {
      const std::int64_t f = std::min(rs, rd);
      add_edge(kids[a], mf + sinks[b].first, f);
      rs -= f;
      rd -= f;
      if (rs == 0 && a + 1 < kids.size()) {
        rs = fine.supply[kids[++a]];
      } else if (b + 1 < sinks.size()) {
        rd = sinks[++b].second;
      } else {
        break;
      }
    }
    if (rs != 0 || rd != 0 || a + 1 != kids.size()) return false;
  }
  if (static_cast<long>(e_to.size()) != 2L * (mf + n - 1)) return false;

  std::vector<int> parent(mf + n, -2);
  std::vector<std::int64_t> flow(mf + n, 0);
  std::vector<int> stack{0};
  parent[0] = -1;
  int seen = 1;
  while (!stack.empty()) {
    const int u = stack.back();
    stack.pop_back();
    for (int e = head[u]; e >= 0; e = e_next[e]) {
      const int v = e_to[e];
      if (parent[v] != -2) continue;
      parent[v] = u;
      flow[v] = e_flow[e];
      // zero-flow arcs must point towards the root
      if (flow[v] == 0 && v >= mf) return false;
      ++seen;
      stack.push_back(v);
    }
  }
  if (seen != mf + n) return false;
  fine.simplex = std::make_unique<detail::NetworkSimplex<PairCost>>(mf, n, pair_cost(fine, cx), std::move(parent),
                                                                    std::move(flow));
  return true;
}

constexpr std::size_t kCoarsestCells = 4096;

std::unique_ptr<Level> solve_level(std::unique_ptr<Level> lv, const SolveContext& cx) {
  const int n = static_cast<int>(cx.demand.size());
  bool can_coarsen = static_cast<std::size_t>(lv->sources()) > std::max<std::size_t>(kCoarsestCells, 4 * n);
  bool shrinks = false;
  for (int s : lv->shape) shrinks = shrinks || s > 1;
  if (can_coarsen && shrinks) {
    std::vector<int> cshape(cx.d);
    for (int k = 0; k < cx.d; ++k) cshape[k] = (lv->shape[k] + 1) / 2;
    std::size_t ccount = 1;
    for (int s : cshape) ccount *= static_cast<std::size_t>(s);
    std::vector<std::int64_t> cunits(ccount, 0);
    std::vector<int> idx(cx.d);
    for (std::size_t f = 0; f < lv->cell_units.size(); ++f) {
      if (lv->cell_units[f] == 0) continue;
      unflat(f, lv->shape, idx);
      for (int& v : idx) v /= 2;
      cunits[flat_of(idx, cshape)] += lv->cell_units[f];
    }
    auto coarse = solve_level(make_level(cx.d, cshape, lv->origin, 2.0 * lv->h, std::move(cunits)), cx);
    if (!prolongate(*coarse, *lv, cx)) lv->simplex.reset();
  }
  if (!lv->simplex) lv->simplex = std::make_unique<detail::NetworkSimplex<PairCost>>(lv->supply, cx.demand, pair_cost(*lv, cx));
  optimize(*lv, cx);
  return lv;
}

}  // namespace

struct CapacityWorkspace::State {
  const GridDensity* grid = nullptr;
  std::size_t cells = 0;
  double total = 0.0;
  int n = 0;
  int d = 0;
  double p = 0.0;
  std::int64_t total_units = 0;  // unperturbed
  std::int64_t scale = 1;        // perturbed units per unperturbed unit
  std::vector<int> sink_point;  // sink -> cloud index
  SolveContext cx;
  std::unique_ptr<Level> level;
  // Warm starts pay off only for small moves. A warm solve may spend a
  // fraction of the last cold solve's pivots; on overrun it restarts cold and
  // the next `warm_skip` solves go cold directly, with doubling backoff.
  std::size_t cold_pivots = 0;
  int warm_skip = 0;
  int backoff = 1;
};

CapacityWorkspace::CapacityWorkspace() = default;
CapacityWorkspace::~CapacityWorkspace() = default;
CapacityWorkspace::CapacityWorkspace(CapacityWorkspace&&) noexcept = default;
CapacityWorkspace& CapacityWorkspace::operator=(CapacityWorkspace&&) noexcept = default;

namespace {

void check_pair(const GridDensity& grid, const PointCloud& cloud, double p) {
  require(p >= 1.0 && std::isfinite(p), ErrorCode::InvalidArgument, "p must be >= 1");
  require(grid.d == cloud.d, ErrorCode::DimensionMismatch, "grid and cloud dimensions differ");
  cloud.check();
}

void setup_state(CapacityWorkspace::State& st, const GridDensity& grid, const PointCloud& cloud, double p, int K) {
  const int d = grid.d;
  const int n = static_cast<int>(cloud.size());
  st.grid = &grid;
  st.cells = grid.cell_count();
  st.total = grid.total;
  st.n = n;
  st.d = d;
  st.p = p;

  // Integer units scaled by a power of two larger than the total of all
  // perturbations: basic flows of the perturbed problem round back to the
  // unperturbed ones, and degenerate bases become rare.
  const std::size_t nodes = grid.nonzero_count() + static_cast<std::size_t>(n);
  std::int64_t scale = 1;
  while (static_cast<double>(scale) < 4.0 * static_cast<double>(nodes) * kJitter) scale *= 2;
  const std::int64_t budget = static_cast<std::int64_t>(kScaledBudget / static_cast<double>(scale)) / n * n;
  auto units = round_units(grid.masses, static_cast<double>(budget) / grid.total, budget);
  std::mt19937_64 jitter(0x5eed);
  std::int64_t supply_sum = 0;
  for (auto& u : units) {
    if (u > 0) u = u * scale + static_cast<std::int64_t>(jitter() % kJitter);
    supply_sum += u;
  }
  st.total_units = budget;
  st.scale = scale;

  std::vector<double> centers;
  centers.reserve(grid.nonzero_count() * d);
  for (std::size_t f = 0; f < grid.cell_count(); ++f) {
    if (units[f] <= 0) continue;
    const auto c = grid.center(f);
    centers.insert(centers.end(), c.begin(), c.end());
  }
  const Box box = joint_box(centers, cloud.coords, d);
  const auto snk_order = morton_order(cloud.coords, d, box);

  st.sink_point.assign(snk_order.begin(), snk_order.end());
  st.cx = SolveContext{};
  st.cx.d = d;
  st.cx.p = p;
  st.cx.K = K;
  st.cx.sink_xy.resize(static_cast<std::size_t>(n) * d);
  for (int j = 0; j < n; ++j) std::copy_n(cloud.point(st.sink_point[j]), d, &st.cx.sink_xy[static_cast<std::size_t>(j) * d]);
  st.cx.demand.resize(n);
  std::int64_t demand_sum = 0;
  for (int j = 0; j < n; ++j) {
    st.cx.demand[j] = budget / n * scale + static_cast<std::int64_t>(jitter() % kJitter) - kJitter / 2;
    demand_sum += st.cx.demand[j];
  }
  st.cx.demand[n - 1] += supply_sum - demand_sum;
  st.level = make_level(d, grid.shape, grid.origin, grid.h, std::move(units));
}

}  // namespace

TransportResult solve_uniform_capacity(const GridDensity& grid, const PointCloud& cloud, double p,
                                       const SolverOptions& options, CapacityWorkspace* workspace) {
  check_pair(grid, cloud, p);
  require(std::abs(grid.total - cloud.total()) <= 1e-9 * std::max(1.0, grid.total), ErrorCode::InvalidArgument,
          "grid total and cloud total differ");
  const std::size_t nonzero = grid.nonzero_count();
  require(nonzero >= 1, ErrorCode::EmptyMeasure, "grid has no mass");
  if (nonzero > options.max_cells)
    fail(ErrorCode::SolverLimitExceeded,
         std::to_string(nonzero) + " nonzero cells exceed the solver limit of " + std::to_string(options.max_cells));

  CapacityWorkspace local;
  CapacityWorkspace& ws = workspace ? *workspace : local;
  const int n = static_cast<int>(cloud.size());
  auto* st = ws.state.get();
  const bool reuse = st && st->grid == &grid && st->cells == grid.cell_count() && st->total == grid.total &&
                     st->n == n && st->d == grid.d && st->p == p && st->level && st->level->simplex;
  const int K = std::max(1, options.candidates);
  bool warm = false;
  if (reuse && st->warm_skip == 0) {
    for (int j = 0; j < n; ++j)
      std::copy_n(cloud.point(st->sink_point[j]), grid.d, &st->cx.sink_xy[static_cast<std::size_t>(j) * grid.d]);
    st->cx.K = K;
    st->cx.stats = &ws;
    warm = optimize(*st->level, st->cx, std::max<std::size_t>(1000, st->cold_pivots / 5));
    if (warm) {
      ++ws.warm_solves;
      st->backoff = 1;
    } else {
      st->warm_skip = st->backoff;
      st->backoff = std::min(st->backoff * 2, 64);
    }
  } else if (reuse) {
    --st->warm_skip;
  }
  if (!warm) {
    int skip = 0, backoff = 1;
    if (reuse) skip = st->warm_skip, backoff = st->backoff;
    ws.state = std::make_unique<CapacityWorkspace::State>();
    st = ws.state.get();
    setup_state(*st, grid, cloud, p, K);
    st->cx.stats = &ws;
    const std::size_t before = ws.pivots;
    st->level = solve_level(std::move(st->level), st->cx);
    st->cold_pivots = ws.pivots - before;
    ++ws.cold_solves;
    st->warm_skip = skip;
    st->backoff = backoff;
  }
  auto& ns = *st->level->simplex;

  TransportResult out;
  out.plan.p = p;
  const double unit_mass = grid.total / static_cast<double>(st->total_units);
  double cost_p = 0.0;
  const std::int64_t scale = st->scale;
  ns.for_each_flow([&](int i, int j, std::int64_t scaled) {
    const std::int64_t units = (scaled + scale / 2) / scale;
    if (units == 0) return;
    const double mass = static_cast<double>(units) * unit_mass;
    out.plan.entries.push_back({st->level->src_cell[i], static_cast<std::size_t>(st->sink_point[j]), mass});
    cost_p += mass * ns.cost()(i, j);
  });
  std::sort(out.plan.entries.begin(), out.plan.entries.end(), [](const PlanEntry& a, const PlanEntry& b) {
    return a.cell != b.cell ? a.cell < b.cell : a.point < b.point;
  });
  out.plan.cost_p = cost_p;
  out.cost = std::pow(std::max(cost_p, 0.0), 1.0 / p);
  return out;
}

std::vector<int> nearest_sites(const GridDensity& grid, const PointCloud& cloud) {
  require(grid.d == cloud.d, ErrorCode::DimensionMismatch, "grid and cloud dimensions differ");
  detail::KdTree tree(cloud.coords, cloud.d, 2.0);
  std::vector<int> site(grid.cell_count(), -1);
  std::vector<double> c(grid.d);
  for (std::size_t i = 0; i < grid.cell_count(); ++i) {
    if (grid.masses[i] == 0.0) continue;
    grid.center(i, c.data());
    site[i] = tree.argmin(c.data(), nullptr);
  }
  return site;
}

double nearest_assignment_cost(const GridDensity& grid, const PointCloud& cloud, double p) {
  check_pair(grid, cloud, p);
  const auto site = nearest_sites(grid, cloud);
  std::vector<double> c(grid.d);
  double s = 0.0;
  for (std::size_t i = 0; i < grid.cell_count(); ++i) {
    if (site[i] < 0) continue;
    grid.center(i, c.data());
    s += grid.masses[i] * dist_pow(c.data(), cloud.point(site[i]), grid.d, p);
  }
  return std::pow(s, 1.0 / p);
}

double w1d_exact(const GridDensity& grid, const PointCloud& cloud, double p, CellModel model) {
  require(grid.d == 1 && cloud.d == 1, ErrorCode::DimensionMismatch, "w1d_exact needs d = 1");
  check_pair(grid, cloud, p);
  require(std::abs(grid.total - cloud.total()) <= 1e-9 * std::max(1.0, grid.total), ErrorCode::InvalidArgument,
          "grid total and cloud total differ");
  std::vector<double> pts(cloud.coords);
  std::sort(pts.begin(), pts.end());
  const std::size_t n = pts.size();
  const double w = grid.total / static_cast<double>(n);

  double acc = 0.0;
  std::size_t chunk = 0;
  double chunk_end = w;  // cumulative mass where the current chunk ends
  double cum = 0.0;
  for (std::size_t c = 0; c < grid.cell_count(); ++c) {
    const double m = grid.masses[c];
    if (m <= 0.0) continue;
    const double a = grid.origin[0] + grid.h * static_cast<double>(c);
    const double center = a + 0.5 * grid.h;
    double u0 = cum;
    const double cell_end = cum + m;
    while (u0 < cell_end) {
      const bool last_chunk = chunk + 1 >= n;
      const double u1 = last_chunk ? cell_end : std::min(cell_end, chunk_end);
      if (u1 > u0) {
        const double y = pts[chunk];
        if (model == CellModel::Atom) {
          acc += (u1 - u0) * pow_nonneg(std::abs(center - y), p);
        } else {
          const double x0 = a + (u0 - cum) / m * grid.h;
          const double x1 = a + (u1 - cum) / m * grid.h;
          acc += m / grid.h * power_integral(x0, x1, y, p);
        }
      }
      u0 = u1;
      if (!last_chunk && u1 >= chunk_end) {
        ++chunk;
        chunk_end = w * static_cast<double>(chunk + 1);
      }
    }
    cum = cell_end;
  }
  return std::pow(std::max(acc, 0.0), 1.0 / p);
}

namespace {

// Block-search network simplex with every arc priced; for small problems.
template <class Cost>
double solve_dense(std::span<const std::int64_t> supply, std::span<const std::int64_t> demand, Cost cost,
                   double unit_mass, double eps) {
  detail::NetworkSimplex<Cost> ns(supply, demand, cost);
  const int m = ns.sources(), n = ns.sinks();
  const std::size_t total = static_cast<std::size_t>(m) * n;
  const std::size_t block = std::max<std::size_t>(static_cast<std::size_t>(std::sqrt(static_cast<double>(total))), 16);
  std::size_t pos = 0;
  std::size_t since_refresh = 0;
  while (true) {
    double best = -eps;
    int bi = -1, bj = -1;
    std::size_t cnt = 0;
    for (std::size_t scanned = 0; scanned < total; ++scanned) {
      const int i = static_cast<int>(pos / n), j = static_cast<int>(pos % n);
      const double rc = ns.reduced_cost(i, j);
      if (rc < best && !ns.is_basic(i, j)) {
        best = rc;
        bi = i;
        bj = j;
      }
      if (++pos == total) pos = 0;
      if (++cnt == block) {
        if (bi >= 0) break;
        cnt = 0;
      }
    }
    if (bi < 0) {
      if (since_refresh == 0) break;
      ns.compute_potentials();
      since_refresh = 0;
      continue;
    }
    ns.pivot(bi, bj);
    if (++since_refresh >= 4096) {
      ns.compute_potentials();
      since_refresh = 1;
    }
  }
  double s = 0.0;
  ns.for_each_flow([&](int i, int j, std::int64_t units) { s += static_cast<double>(units) * unit_mass * ns.cost()(i, j); });
  return s;
}

}  // namespace

double wb_boundary(const GridDensity& grid, const PointCloud& cloud, const Box& omega, double p) {
  check_pair(grid, cloud, p);
  require(omega.dim() == grid.d, ErrorCode::DimensionMismatch, "omega dimension differs from the grid");
  require(omega.volume() > 0.0, ErrorCode::InvalidArgument, "omega must have positive volume");
  const int d = grid.d;

  std::vector<double> cell_xy, cell_mass, cell_bd;
  std::vector<double> c(d);
  for (std::size_t i = 0; i < grid.cell_count(); ++i) {
    if (grid.masses[i] <= 0.0) continue;
    grid.center(i, c.data());
    if (!omega.contains(c.data())) continue;
    cell_xy.insert(cell_xy.end(), c.begin(), c.end());
    cell_mass.push_back(grid.masses[i]);
    cell_bd.push_back(pow_nonneg(omega.boundary_distance(c.data()), p));
  }
  std::vector<double> pt_xy, pt_bd;
  for (std::size_t j = 0; j < cloud.size(); ++j) {
    if (!omega.contains(cloud.point(j))) continue;
    pt_xy.insert(pt_xy.end(), cloud.point(j), cloud.point(j) + d);
    pt_bd.push_back(pow_nonneg(omega.boundary_distance(cloud.point(j)), p));
  }
  const std::size_t mc = cell_mass.size(), np = pt_bd.size();
  double trivial = 0.0;
  if (mc == 0 || np == 0) {
    for (std::size_t i = 0; i < mc; ++i) trivial += cell_mass[i] * cell_bd[i];
    for (std::size_t j = 0; j < np; ++j) trivial += cloud.weight_each * pt_bd[j];
    return std::pow(trivial, 1.0 / p);
  }

  double mass_sum = 0.0;
  for (double m : cell_mass) mass_sum += m;
  const double pts_mass = cloud.weight_each * static_cast<double>(np);
  const double scale = (kUnitBudget / 4.0) / (mass_sum + pts_mass);
  std::vector<std::int64_t> cu(mc), pu(np);
  for (std::size_t i = 0; i < mc; ++i) cu[i] = std::llround(cell_mass[i] * scale);
  for (std::size_t j = 0; j < np; ++j) pu[j] = std::llround(cloud.weight_each * scale);
  // Drop nodes whose mass rounds to nothing.
  std::vector<std::size_t> ci, pj;
  for (std::size_t i = 0; i < mc; ++i)
    if (cu[i] > 0) ci.push_back(i);
  for (std::size_t j = 0; j < np; ++j)
    if (pu[j] > 0) pj.push_back(j);

  std::vector<std::int64_t> supply, demand;
  std::int64_t su = 0, du = 0;
  for (auto i : ci) {
    supply.push_back(cu[i]);
    su += cu[i];
  }
  for (auto j : pj) {
    demand.push_back(pu[j]);
    du += pu[j];
  }
  supply.push_back(du);  // reservoir source feeds points
  demand.push_back(su);  // reservoir sink absorbs cells
  const int ms = static_cast<int>(ci.size()), nt = static_cast<int>(pj.size());
  auto cost = [&](int i, int j) -> double {
    if (i == ms && j == nt) return 0.0;
    if (i == ms) return pt_bd[pj[j]];
    if (j == nt) return cell_bd[ci[i]];
    return dist_pow(&cell_xy[ci[i] * d], &pt_xy[pj[j] * d], d, p);
  };
  Box box = joint_box(cell_xy, pt_xy, d);
  const double eps = 1e-11 * std::max(pow_nonneg(box.diameter(), p), 1e-300);
  const double total = solve_dense(supply, demand, cost, 1.0 / scale, eps);
  return std::pow(std::max(total, 0.0), 1.0 / p);
}

namespace {

struct UnionFind {
  std::vector<int> parent;
  std::vector<std::pair<int, int>> undo;
  explicit UnionFind(int k) : parent(k) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) const {
    while (parent[x] != x) x = parent[x];
    return x;
  }
  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[a] = b;
    undo.push_back({a, a});
    return true;
  }
  void rollback() {
    parent[undo.back().first] = undo.back().second;
    undo.pop_back();
  }
};

}  // namespace

double brute_force_oracle(const GridDensity& grid, const PointCloud& cloud, double p) {
  check_pair(grid, cloud, p);
  std::vector<double> mass;
  std::vector<std::vector<double>> centers;
  for (std::size_t i = 0; i < grid.cell_count(); ++i) {
    if (grid.masses[i] <= 0.0) continue;
    mass.push_back(grid.masses[i]);
    centers.push_back(grid.center(i));
  }
  const int m = static_cast<int>(mass.size());
  const int n = static_cast<int>(cloud.size());
  if (m > 8 || n > 4) fail(ErrorCode::TooLarge, "brute force oracle is limited to 8 cells and 4 points");
  const double w = grid.total / n;

  std::vector<std::pair<int, int>> edges;
  std::vector<double> ecost;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      edges.push_back({i, m + j});
      ecost.push_back(dist_pow(centers[i], cloud.row(j), p));
    }
  const int E = static_cast<int>(edges.size());
  const int need = m + n - 1;
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> chosen;
  UnionFind uf(m + n);

  // Flow on a spanning tree by repeatedly stripping leaves.
  auto evaluate = [&]() {
    std::vector<double> rem(m + n);
    for (int i = 0; i < m; ++i) rem[i] = mass[i];
    for (int j = 0; j < n; ++j) rem[m + j] = w;
    std::vector<int> deg(m + n, 0);
    for (int e : chosen) {
      ++deg[edges[e].first];
      ++deg[edges[e].second];
    }
    std::vector<char> used(E, 0);
    double cost = 0.0;
    for (int step = 0; step < need; ++step) {
      int leaf = -1;
      for (int u = 0; u < m + n && leaf < 0; ++u)
        if (deg[u] == 1) leaf = u;
      int edge = -1;
      for (int e : chosen)
        if (!used[e] && (edges[e].first == leaf || edges[e].second == leaf)) edge = e;
      const double f = rem[leaf];
      if (f < -1e-12) return;
      const int other = edges[edge].first == leaf ? edges[edge].second : edges[edge].first;
      rem[other] -= f;
      rem[leaf] = 0.0;
      used[edge] = 1;
      --deg[leaf];
      --deg[other];
      cost += std::max(f, 0.0) * ecost[edge];
    }
    best = std::min(best, cost);
  };

  auto search = [&](auto&& self, int e) -> void {
    const int have = static_cast<int>(chosen.size());
    if (have == need) {
      evaluate();
      return;
    }
    if (E - e < need - have) return;
    if (uf.unite(edges[e].first, edges[e].second)) {
      chosen.push_back(e);
      self(self, e + 1);
      chosen.pop_back();
      uf.rollback();
    }
    self(self, e + 1);
  };
  search(search, 0);
  return std::pow(std::max(best, 0.0), 1.0 / p);
}

double cell_average_cost(const GridDensity& grid, std::size_t flat, const double* y, double p) {
  const int d = grid.d;
  std::vector<double> c(d);
  grid.center(flat, c.data());
  const double h = grid.h;
  if (p == 2.0) return sq_dist(c.data(), y, d) + d * h * h / 12.0;
  if (d == 1) return power_integral(c[0] - 0.5 * h, c[0] + 0.5 * h, y[0], p) / h;

  using GL = boost::math::quadrature::gauss<double, 8>;
  std::vector<double> nodes, weights;
  for (std::size_t k = 0; k < GL::abscissa().size(); ++k) {
    const double x = GL::abscissa()[k], wt = GL::weights()[k];
    nodes.push_back(x);
    weights.push_back(wt);
    if (x != 0.0) {
      nodes.push_back(-x);
      weights.push_back(wt);
    }
  }
  const int q = static_cast<int>(nodes.size());
  // Split cells close to y so the kink at y is not sampled by a single rule.
  const bool near = std::sqrt(sq_dist(c.data(), y, d)) < 1.5 * h * std::sqrt(static_cast<double>(d));
  const int split = near ? 4 : 1;
  const double sub = h / split;
  std::vector<int> idx(d, 0), sidx(d, 0);
  std::vector<double> z(d);
  double acc = 0.0;
  const int sub_count = static_cast<int>(std::pow(split, d));
  const int node_count = static_cast<int>(std::pow(q, d));
  for (int s = 0; s < sub_count; ++s) {
    int t = s;
    for (int k = 0; k < d; ++k) {
      sidx[k] = t % split;
      t /= split;
    }
    for (int r = 0; r < node_count; ++r) {
      int u = r;
      double wt = 1.0;
      for (int k = 0; k < d; ++k) {
        const int a = u % q;
        u /= q;
        z[k] = c[k] - 0.5 * h + sub * (sidx[k] + 0.5 + 0.5 * nodes[a]);
        wt *= 0.5 * weights[a];
      }
      acc += wt * dist_pow(z.data(), y, d, p);
    }
  }
  return acc / sub_count;
}

double spread_cost(const GridDensity& grid, const PointCloud& cloud, const TransportPlan& plan, double p) {
  double s = 0.0;
  for (const auto& e : plan.entries) s += e.mass * cell_average_cost(grid, e.cell, cloud.point(e.point), p);
  return std::pow(std::max(s, 0.0), 1.0 / p);
}

std::string plan_to_csv(const TransportPlan& plan) {
  std::string out = "cell_index,point_index,mass\n";
  char buf[64];
  for (const auto& e : plan.entries) {
    std::snprintf(buf, sizeof buf, "%.17g", e.mass);
    out += std::to_string(e.cell) + "," + std::to_string(e.point) + "," + buf + "\n";
  }
  return out;
}

}  // namespace eqq

#pragma once

// Random grids and clouds for property and cross-check tests.

#include <algorithm>
#include <random>
#include <vector>

#include "eqq/geometry.hpp"
#include "eqq/measure.hpp"
#include "eqq/transport.hpp"

namespace testgen {

// Grid on a cube lattice with exactly `nonzero` positive cells of random mass.
inline eqq::GridDensity sparse_grid(std::mt19937_64& gen, int d, int side, int nonzero, double total = 1.0,
                                    double h = 0.0, std::vector<double> origin = {}) {
  if (h <= 0.0) h = 1.0 / side;
  if (origin.empty()) origin.assign(d, 0.0);
  std::vector<int> shape(d, side);
  std::size_t cells = 1;
  for (int k = 0; k < d; ++k) cells *= static_cast<std::size_t>(side);
  std::vector<std::size_t> idx(cells);
  for (std::size_t i = 0; i < cells; ++i) idx[i] = i;
  for (std::size_t i = 0; i < std::min<std::size_t>(static_cast<std::size_t>(nonzero), cells); ++i) {
    const std::size_t j = i + static_cast<std::size_t>(eqq::uniform01(gen) * static_cast<double>(cells - i));
    std::swap(idx[i], idx[j]);
  }
  nonzero = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(nonzero), cells));
  std::vector<double> masses(cells, 0.0);
  double s = 0.0;
  for (int i = 0; i < nonzero; ++i) {
    masses[idx[i]] = 0.05 + eqq::uniform01(gen);
    s += masses[idx[i]];
  }
  for (double& m : masses) m *= total / s;
  return eqq::GridDensity::from_masses(d, shape, origin, h, masses);
}

inline eqq::PointCloud random_cloud(std::mt19937_64& gen, int d, int n, double total, double lo = 0.0,
                                    double hi = 1.0) {
  std::vector<double> c(static_cast<std::size_t>(n) * d);
  for (double& v : c) v = lo + (hi - lo) * eqq::uniform01(gen);
  return eqq::PointCloud(d, c, total);
}

}  // namespace testgen

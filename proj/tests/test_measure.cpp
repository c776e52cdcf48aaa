#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "eqq/errors.hpp"
#include "eqq/measure.hpp"
#include "oracles.hpp"

using namespace eqq;

namespace {

double sum(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

}  // namespace

TEST_CASE("uniform cube splits evenly") {
  const std::vector<int> res{4, 4};
  const auto g = build_grid(MeasureSpec::uniform_cube(2), res, Box::cube(2, 0.0, 1.0));
  REQUIRE(g.cell_count() == 16);
  for (double m : g.masses) CHECK(m == doctest::Approx(1.0 / 16).epsilon(1e-15));
  CHECK(std::abs(sum(g.masses) - 1.0) <= 1e-12);
}

TEST_CASE("half indicator") {
  IndicatorGrid ind;
  ind.box = Box::cube(2, 0.0, 1.0);
  ind.shape = {2, 1};
  ind.inside = {1, 0};
  const std::vector<int> res{4, 4};
  const auto g = build_grid(MeasureSpec::uniform_set(ind), res, Box::cube(2, 0.0, 1.0));
  int eighth = 0, zero = 0;
  for (double m : g.masses) {
    if (std::abs(m - 0.125) < 1e-15) ++eighth;
    if (m == 0.0) ++zero;
  }
  CHECK(eighth == 8);
  CHECK(zero == 8);
  std::vector<double> c(2);
  for (std::size_t i = 0; i < g.cell_count(); ++i) {
    g.center(i, c.data());
    CHECK((g.masses[i] > 0.0) == (c[0] < 0.5));
  }
}

TEST_CASE("gaussian grid matches a Monte Carlo histogram") {
  const std::vector<int> res{64};
  const auto g = build_grid(MeasureSpec::gaussian({0.0}, 1.0), res, Box::cube(1, -6.0, 6.0));
  constexpr int kSamples = 1'000'000;
  std::mt19937_64 gen(20240611);
  std::normal_distribution<double> normal;
  std::vector<double> hist(64, 0.0);
  for (int i = 0; i < kSamples; ++i) {
    const double x = normal(gen);
    const int b = static_cast<int>(std::floor((x + 6.0) / g.h));
    if (b >= 0 && b < 64) hist[b] += 1.0;
  }
  int bad = 0;
  for (int b = 0; b < 64; ++b) {
    const double freq = hist[b] / kSamples;
    const double m = g.masses[b];
    const double se = std::sqrt(std::max(m * (1.0 - m), 1e-12) / kSamples);
    if (std::abs(freq - m) > 3.0 * se + 1e-9) ++bad;
  }
  CHECK(bad == 0);
}

TEST_CASE("gaussian tail check") {
  const std::vector<int> res{16};
  CHECK_THROWS_AS(build_grid(MeasureSpec::gaussian({0.0}, 1.0), res, Box::cube(1, -2.0, 2.0)), Error);
  const auto g = build_grid(MeasureSpec::gaussian({0.0}, 1.0), res, Box::cube(1, -2.0, 2.0), true);
  CHECK(std::abs(g.total - 1.0) <= 1e-12);
}

TEST_CASE("empty measure and invalid specs") {
  const std::vector<int> res{4};
  CHECK_THROWS_AS(build_grid(MeasureSpec::uniform_cube(1), res, Box::cube(1, 2.0, 3.0)), Error);
  CHECK_THROWS_AS(MeasureSpec::two_blocks({0.5}).validate(), Error);
  CHECK_THROWS_AS(MeasureSpec::segment({0.0, 0.0}, {0.0, 0.0}).validate(), Error);
  auto mix = MeasureSpec::mixture({{0.5, MeasureSpec::uniform_cube(1)}, {0.4, MeasureSpec::uniform_cube(1)}});
  CHECK_THROWS_AS(mix.validate(), Error);
  const std::vector<int> rect{4, 2};
  CHECK_THROWS_AS(build_grid(MeasureSpec::uniform_cube(2), rect, Box::cube(2, 0.0, 1.0)), Error);
}

TEST_CASE("segment carries singular cells") {
  const auto spec = MeasureSpec::mixture(
      {{0.7, MeasureSpec::uniform_cube(2)}, {0.3, MeasureSpec::segment({0.1, 0.55}, {0.9, 0.55})}});
  const std::vector<int> res{10, 10};
  const auto g = build_grid(spec, res, Box::cube(2, 0.0, 1.0));
  std::size_t flagged = 0;
  double singular_mass = 0.0;
  for (std::size_t i = 0; i < g.cell_count(); ++i) {
    if (g.is_singular(i)) {
      ++flagged;
      singular_mass += g.masses[i] - 0.7 / 100.0;
    }
  }
  CHECK(flagged == 8);
  CHECK(singular_mass == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(density_functional(g, 0.5, true) < density_functional(g, 0.5, false));
}

TEST_CASE("moment examples") {
  const auto single = GridDensity::from_masses(2, {1, 1}, {-0.5, -0.5}, 1.0, {1.0});
  CHECK(moment(single, 2.0) == 0.0);
  const std::vector<int> r2{2};
  CHECK(moment(build_grid(MeasureSpec::uniform_cube(1), r2, Box::cube(1, 0.0, 1.0)), 1.0) ==
        doctest::Approx(0.5).epsilon(1e-15));
  const std::vector<int> r256{256, 256};
  const auto u2 = build_grid(MeasureSpec::uniform_cube(2), r256, Box::cube(2, 0.0, 1.0));
  CHECK(std::abs(moment(u2, 2.0) - 2.0 / 3.0) <= 1e-4);
}

TEST_CASE("density functional examples") {
  for (int d = 1; d <= 3; ++d) {
    const std::vector<int> res(d, 8);
    const auto g = build_grid(MeasureSpec::uniform_cube(d), res, Box::cube(d, 0.0, 1.0));
    for (double b : {0.25, 0.5, 2.0 / 3.0, 1.0}) CHECK(density_functional(g, b, false) == doctest::Approx(1.0).epsilon(1e-12));
  }
  IndicatorGrid ind = IndicatorGrid::full(Box::cube(2, 0.0, 2.0));
  const std::vector<int> res{16, 16};
  const auto g = build_grid(MeasureSpec::uniform_set(ind), res, Box::cube(2, 0.0, 2.0));
  CHECK(density_functional(g, 0.5, false) == doctest::Approx(2.0).epsilon(1e-12));

  const std::vector<int> r256{256, 256};
  const auto gauss = build_grid(MeasureSpec::gaussian({0.0, 0.0}, 1.0), r256, Box::cube(2, -6.0, 6.0));
  const double one_d = oracle::integrate(
      [](double x) { return std::sqrt(std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi)); }, -30.0, 30.0);
  const double ref = one_d * one_d;
  CHECK(std::abs(density_functional(gauss, 0.5, false) - ref) <= 1e-3 * ref);
  CHECK_THROWS_AS(density_functional(gauss, 1.5, false), Error);
}

TEST_CASE("mass conservation across specs") {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 50; ++t) {
    const int d = 1 + t % 3;
    std::vector<double> shift(d, 0.0);
    shift[0] = 1.2 + u(gen);
    MeasureSpec spec = (t % 2 == 0) ? MeasureSpec::two_blocks(shift, 0.2 + 0.6 * u(gen))
                                    : MeasureSpec::mixture({{0.3, MeasureSpec::gaussian(std::vector<double>(d, 0.5), 0.1)},
                                                            {0.7, MeasureSpec::uniform_cube(d)}});
    spec.declared_total = 0.5 + u(gen);
    const auto g = build_grid_spacing(spec, 0.125);
    CHECK(std::abs(sum(g.masses) - spec.declared_total) <= 1e-12);
    CHECK(std::abs(g.total - spec.declared_total) <= 1e-12);
  }
}

TEST_CASE("refinement leaves the functional fixed for aligned indicators") {
  IndicatorGrid ind;
  ind.box = Box::cube(2, 0.0, 1.0);
  ind.shape = {4, 4};
  ind.inside = {1, 1, 0, 0, 1, 1, 1, 0, 0, 1, 1, 1, 0, 0, 0, 1};
  const auto spec = MeasureSpec::uniform_set(ind);
  for (double b : {0.25, 0.5, 0.75}) {
    const std::vector<int> r1{8, 8}, r2{16, 16}, r3{32, 32};
    const double v1 = density_functional(build_grid(spec, r1, ind.box), b, false);
    const double v2 = density_functional(build_grid(spec, r2, ind.box), b, false);
    const double v3 = density_functional(build_grid(spec, r3, ind.box), b, false);
    CHECK(std::abs(v1 - v2) <= 1e-12);
    CHECK(std::abs(v2 - v3) <= 1e-12);
  }
}

TEST_CASE("dilation scaling of the functional") {
  for (int d = 1; d <= 3; ++d) {
    for (double lambda : {0.5, 1.5, 3.0}) {
      const std::vector<int> res(d, 6);
      const auto g1 = build_grid(MeasureSpec::uniform_cube(d), res, Box::cube(d, 0.0, 1.0));
      const auto g2 = build_grid(MeasureSpec::uniform_set(IndicatorGrid::full(Box::cube(d, 0.0, lambda))), res,
                                 Box::cube(d, 0.0, lambda));
      for (double b : {0.2, 0.5, 0.8}) {
        const double expect = std::pow(lambda, d * (1.0 - b)) * density_functional(g1, b, false);
        CHECK(std::abs(density_functional(g2, b, false) - expect) <= 1e-9);
      }
    }
  }
}

TEST_CASE("moment monotonicity in theta") {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> outside(16), inside(16);
    for (int i = 0; i < 16; ++i) {
      outside[i] = u(gen);
      inside[i] = u(gen);
    }
    const auto far = GridDensity::from_masses(2, {4, 4}, {1.5, 1.5}, 0.5, outside);
    const auto near = GridDensity::from_masses(2, {4, 4}, {-0.35, -0.35}, 0.175, inside);
    double prev_far = moment(far, 1.0), prev_near = moment(near, 1.0);
    for (double th = 1.5; th <= 6.0; th += 0.5) {
      const double mf = moment(far, th), mn = moment(near, th);
      CHECK(mf >= prev_far);
      CHECK(mn <= prev_near);
      prev_far = mf;
      prev_near = mn;
    }
  }
}

TEST_CASE("grid geometry") {
  const auto g = GridDensity::from_masses(2, {2, 3}, {1.0, -1.0}, 0.5, std::vector<double>(6, 1.0 / 6));
  const auto c = g.center(5);
  CHECK(c[0] == doctest::Approx(1.75));
  CHECK(c[1] == doctest::Approx(0.25));
  int idx[2];
  g.unflatten(4, idx);
  CHECK(idx[0] == 1);
  CHECK(idx[1] == 1);
  const std::vector<int> v{1, 1};
  CHECK(g.flat_index(v) == 4);
  CHECK(g.density(0) == doctest::Approx(1.0 / 6 / 0.25));
  CHECK(block_gap(std::vector<double>{2.0, 0.0}) == doctest::Approx(1.0));
}

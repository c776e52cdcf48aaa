#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "eqq/asympt.hpp"
#include "eqq/errors.hpp"
#include "oracles.hpp"

using namespace eqq;

namespace {

double exact_1d(double p, int n) { return 1.0 / (std::pow(p + 1.0, 1.0 / p) * 2.0 * n); }

SweepResult synthetic(const std::vector<int>& ns, auto error) {
  SweepResult s;
  for (int n : ns) {
    SweepRow r;
    r.n = n;
    r.d = 2;
    r.method = "synthetic";
    r.error = error(n);
    r.scaled_error = std::sqrt(static_cast<double>(n)) * r.error;
    s.rows.push_back(r);
  }
  return s;
}

template <class F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Internal;
}

}  // namespace

TEST_CASE("midpoint sweep on the unit segment") {
  SweepOptions opt;
  opt.methods = {Method::Midpoint1d};
  const std::vector<int> ns{1, 2, 4};
  for (double p : {1.0, 2.0, 3.0}) {
    const auto s = sweep(MeasureSpec::uniform_cube(1), p, ns, opt);
    REQUIRE(s.rows.size() == 3);
    CHECK(s.ok());
    for (const auto& r : s.rows) {
      CHECK(r.method == "midpoint_1d");
      CHECK(r.error == doctest::Approx(exact_1d(p, r.n)).epsilon(1e-12));
      CHECK(r.scaled_error == doctest::Approx(r.n * r.error).epsilon(1e-12));
      CHECK(r.runtime_ms == 0.0);
      CHECK(r.resolution >= 64 * r.n);
    }
    const auto c = coefficient_estimate(s, 1);
    CHECK(c.value == doctest::Approx(1.0 / (2.0 * std::pow(p + 1.0, 1.0 / p))).epsilon(1e-12));
    for (const auto& r : s.rows) CHECK(c.value <= r.scaled_error);
  }
  const std::vector<int> one{5};
  CHECK(sweep(MeasureSpec::uniform_cube(1), 2.0, one, opt).rows.size() == 1);
  const std::vector<int> bad{4, 2};
  CHECK(code_of([&] { sweep(MeasureSpec::uniform_cube(1), 2.0, bad, opt); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("sweep CSV is deterministic") {
  SweepOptions opt;
  opt.cfg.seed = 7;
  opt.cfg.restarts = 2;
  opt.cfg.max_iters = 5;
  const std::vector<int> ns{2, 4, 8};
  const auto a = sweep(MeasureSpec::uniform_cube(2), 2.0, ns, opt).to_csv();
  const auto b = sweep(MeasureSpec::uniform_cube(2), 2.0, ns, opt).to_csv();
  CHECK(a == b);
  CHECK(a.rfind("n,method,p,d,error,scaled_error,seed,restarts,runtime_ms\n", 0) == 0);
}

TEST_CASE("failed rows are marked and the sweep continues") {
  SweepOptions opt;
  opt.methods = {Method::Hex2d};  // not applicable in d = 1
  const std::vector<int> ns{2, 3};
  const auto s = sweep(MeasureSpec::uniform_cube(1), 2.0, ns, opt);
  REQUIRE(s.rows.size() == 2);
  CHECK(!s.ok());
  for (const auto& r : s.rows) CHECK(r.failed);
  CHECK(code_of([&] { coefficient_estimate(s, 1); }) == ErrorCode::EmptySweep);
}

TEST_CASE("rate fits") {
  const auto s = synthetic({4, 8, 16, 32, 64, 128}, [](int n) { return std::pow(n, -0.5); });
  const auto f = rate_fit(s, 0.0);
  CHECK(std::abs(f.slope + 0.5) <= 1e-12);
  CHECK(f.r2 == doctest::Approx(1.0));
  const auto g = rate_fit(s);
  CHECK(g.first_n == 8);
  CHECK(std::abs(g.slope + 0.5) <= 1e-12);

  const auto logged = synthetic({4, 8, 16, 32}, [](int n) { return std::sqrt(1.0 + std::log(n)) / std::sqrt(n); });
  CHECK(std::abs(rate_fit_log(logged, 2, 0.0).slope + 0.5) <= 1e-12);

  CHECK(code_of([] { rate_fit(synthetic({1, 2, 3}, [](int) { return 0.3; })); }) == ErrorCode::DegenerateFit);
  CHECK(code_of([] { rate_fit(synthetic({1, 2}, [](int n) { return 1.0 / n; })); }) == ErrorCode::DegenerateFit);
}

TEST_CASE("rates on the square and on distant blocks") {
  SweepOptions opt;
  opt.cfg.max_iters = 30;
  opt.cfg.tol = 1e-4;
  const std::vector<int> ns{4, 8, 16, 32, 64};
  const auto s = sweep(MeasureSpec::uniform_cube(2), 1.0, ns, opt);
  REQUIRE(s.ok());
  const auto f = rate_fit(s);
  CHECK(f.slope >= -0.58);
  CHECK(f.slope <= -0.42);

  // one-dimensional chunk quantizers are optimal, so these errors are exact
  SweepOptions chunk;
  chunk.methods = {Method::Chunk1d};
  std::vector<int> all;
  for (int n = 2; n <= 64; ++n) all.push_back(n);
  const auto t = sweep(MeasureSpec::two_blocks({2.0}), 2.0, all, chunk);
  REQUIRE(t.ok());
  CHECK(rate_fit(t, 0.0).slope > -0.8);
}

TEST_CASE("bound report") {
  for (int d : {2, 3}) {
    const auto g = build_grid(MeasureSpec::uniform_cube(d), std::vector<int>(d, 8), Box::cube(d, 0.0, 1.0));
    const auto rep = bound_report(g, 1.0, d, 0.3, 0.4);
    CHECK(rep.zador_functional == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(*rep.empirical_functional_full == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(*rep.empirical_functional_excl == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(*rep.rhs_U == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(*rep.rhs_L <= *rep.rhs_U);
  }

  const auto g = build_grid_spacing(MeasureSpec::gaussian({0.0, 0.0}, 1.0), 12.0 / 256);
  const auto rep = bound_report(g, 1.0, 2);
  auto oracle_2d = [](double e) {
    const double one = oracle::integrate(
        [e](double x) { return std::pow(std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi), e); }, -12.0,
        12.0);
    return one * one;
  };
  CHECK(*rep.empirical_functional_full == doctest::Approx(oracle_2d(0.5)).epsilon(1e-3));
  CHECK(rep.zador_functional == doctest::Approx(oracle_2d(2.0 / 3.0)).epsilon(1e-3));
  CHECK(!rep.rhs_L.has_value());

  const auto mixed = MeasureSpec::mixture(
      {{0.7, MeasureSpec::uniform_cube(2)}, {0.3, MeasureSpec::segment({0.1, 0.5}, {0.9, 0.5})}});
  const auto gm = build_grid(mixed, std::vector<int>{32, 32}, Box::cube(2, 0.0, 1.0));
  const auto rm = bound_report(gm, 1.0, 2);
  CHECK(*rm.empirical_functional_excl < *rm.empirical_functional_full);

  CHECK(code_of([&] { bound_report(g, 2.0, 2); }) == ErrorCode::ExponentOutOfRange);
  CHECK_NOTHROW(bound_report(g, 2.0, 2, 0.3, {}, false));
}

TEST_CASE("distant blocks floor") {
  CHECK(distant_bound(4, 1.0, 0.5, 2.0) == 0.0);
  CHECK(distant_bound(3, 1.0, 0.5, 1.0) == doctest::Approx(1.0 / 12.0).epsilon(1e-14));
  CHECK(distant_bound(3, 1.0, 0.5, 2.0) == doctest::Approx(0.204124).epsilon(1e-6));
  CHECK(code_of([] { distant_bound(3, 1.0, 1.0, 2.0); }) == ErrorCode::InvalidArgument);
}

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <vector>

#include "netperm/inference.hpp"
#include "netperm/interference.hpp"
#include "netperm/randomize.hpp"
#include "netperm/rng.hpp"

using namespace netperm;

namespace {

ObservedData censored_sample(std::uint64_t key, std::size_t n) {
  Rng gen = Rng::keyed({key, 1});
  ObservedData data;
  data.y.resize(n);
  data.d.resize(n);
  data.z = sample_assignment(n, n / 2, gen);
  for (std::size_t i = 0; i < n; ++i) {
    const double failure = std::exp(4.5 + 0.3 * gen.normal());
    const double censor = std::exp(4.7 + 0.3 * gen.normal());
    data.y[i] = std::min(failure, censor);
    data.d[i] = failure <= censor ? 1 : 0;
  }
  return data;
}

PvalueGrid hand_grid(const std::vector<double>& deltas, const std::vector<double>& taus,
                     const std::vector<double>& pvalues, double alpha) {
  PvalueGrid g;
  g.delta_values = deltas;
  g.tau_values = taus;
  g.alpha = alpha;
  g.results.resize(pvalues.size());
  for (std::size_t k = 0; k < pvalues.size(); ++k) g.results[k].pvalue = pvalues[k];
  g.failed.assign(pvalues.size(), 0);
  g.errors.assign(pvalues.size(), "");
  return g;
}

}  // namespace

TEST_CASE("each grid point reproduces a standalone test with the derived seed") {
  Rng net_rng = Rng::keyed({700, 0});
  const auto a = gen_poisson_neighbors(12, 3.0, net_rng);
  const auto data = censored_sample(700, 12);
  const auto model = parse_model("add-G");

  const std::vector<double> deltas = {0.0, 0.3};
  const std::vector<double> taus = {0.0, 0.4, 0.8};
  const std::uint64_t draws = 59, seed = 21;
  const auto grid = invert(data, a, model, StatKind::Logr, deltas, taus, draws, 0.05, seed);

  REQUIRE(grid.n_delta() == 2);
  REQUIRE(grid.n_tau() == 3);
  CHECK(grid.failed_points() == 0);
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      const std::size_t k = grid.index(i, j);
      const auto standalone = test_ipz(data, a, model, {deltas[i], taus[j]}, StatKind::Logr, draws,
                                       derive_key({seed, static_cast<std::uint64_t>(k)}));
      CHECK(grid.results[k].pvalue == standalone.pvalue);
      CHECK(grid.results[k].extreme_count == standalone.extreme_count);
      CHECK(grid.results[k].statistic_observed == standalone.statistic_observed);
    }
  }
}

TEST_CASE("grid accessors distinguish failed points") {
  auto g = hand_grid({0.0, 1.0}, {0.0, 2.0}, {0.50, 0.02, 0.80, 0.04}, 0.05);
  g.failed[2] = 1;

  CHECK(g.pvalue(0, 0) == 0.50);
  CHECK(std::isnan(g.pvalue(1, 0)));
  CHECK(g.in_confidence_set(0, 0));
  CHECK_FALSE(g.in_confidence_set(0, 1));
  CHECK_FALSE(g.in_confidence_set(1, 0));  // failed, even though pv would pass
  CHECK_FALSE(g.in_confidence_set(1, 1));
  CHECK(g.failed_points() == 1);
  CHECK_FALSE(g.set_empty());

  auto all_low = hand_grid({0.0}, {0.0, 1.0}, {0.01, 0.02}, 0.05);
  CHECK(all_low.set_empty());
}

TEST_CASE("point estimate takes the first maximizer and reports ties") {
  const auto g = hand_grid({0.0, 1.0}, {10.0, 20.0}, {0.2, 0.8, 0.8, 0.1}, 0.05);
  const auto est = point_estimate(g);
  REQUIRE(est.valid);
  CHECK(est.max_pvalue == 0.8);
  CHECK(est.theta.delta == 0.0);
  CHECK(est.theta.tau == 20.0);
  CHECK(est.tied);

  const auto g2 = hand_grid({0.0, 1.0}, {10.0, 20.0}, {0.2, 0.3, 0.9, 0.1}, 0.05);
  const auto est2 = point_estimate(g2);
  CHECK(est2.theta.delta == 1.0);
  CHECK(est2.theta.tau == 10.0);
  CHECK_FALSE(est2.tied);

  auto dead = hand_grid({0.0}, {0.0}, {0.4}, 0.05);
  dead.failed[0] = 1;
  CHECK_FALSE(point_estimate(dead).valid);
}

TEST_CASE("marginal projection keeps slice values and reports the hull") {
  // 3x3 surface: row 0 all out; row 1 in at tau index 0; row 2 in at tau 2.
  const auto g = hand_grid({-1.0, 0.0, 1.0}, {2.0, 3.0, 4.0},
                           {0.01, 0.01, 0.01, 0.20, 0.01, 0.01, 0.01, 0.01, 0.30}, 0.05);

  const auto md = marginal_interval(g, Axis::Delta, 0.05);
  REQUIRE_FALSE(md.empty);
  CHECK(md.values == std::vector<double>{0.0, 1.0});
  CHECK(md.lo == 0.0);
  CHECK(md.hi == 1.0);

  const auto mt = marginal_interval(g, Axis::Tau, 0.05);
  REQUIRE_FALSE(mt.empty);
  CHECK(mt.values == std::vector<double>{2.0, 4.0});
  CHECK(mt.lo == 2.0);
  CHECK(mt.hi == 4.0);

  // a stricter alpha can only shrink the projection
  const auto strict = marginal_interval(g, Axis::Delta, 0.25);
  REQUIRE_FALSE(strict.empty);
  CHECK(strict.values == std::vector<double>{1.0});

  const auto none = marginal_interval(g, Axis::Delta, 0.5);
  CHECK(none.empty);

  CHECK_THROWS_AS(marginal_interval(g, Axis::Delta, 0.0), data_error);
}

TEST_CASE("interpret_add exponentiates the effect parameters") {
  const auto unity = interpret_add({0.0, 0.0});
  CHECK(unity.individual_ratio == 1.0);
  CHECK(unity.spillover_ratio == 1.0);
  CHECK(unity.blanket_ratio == 1.0);

  const auto r = interpret_add({0.7, 4.0});
  CHECK(r.individual_ratio == Catch::Approx(std::exp(0.7)).epsilon(1e-15));
  CHECK(r.spillover_ratio == Catch::Approx(std::exp(4.0)).epsilon(1e-15));
  CHECK(r.blanket_ratio == Catch::Approx(std::exp(4.7)).epsilon(1e-15));
  CHECK(r.individual_ratio > 2.013);
  CHECK(r.individual_ratio < 2.014);
  CHECK(r.blanket_ratio > 109.9);
  CHECK(r.blanket_ratio < 110.0);
}

TEST_CASE("invert records per-point failures instead of throwing") {
  Rng net_rng = Rng::keyed({701, 0});
  const auto a = gen_poisson_neighbors(10, 3.0, net_rng);
  const auto data = censored_sample(701, 10);
  const auto model = parse_model("add-G");

  // delta0 = 800 underflows every treated uniformity time to zero
  const auto grid = invert(data, a, model, StatKind::Logr, {0.0, 800.0}, {0.0, 0.5}, 39, 0.05, 4);
  CHECK(grid.failed_points() == 2);
  for (std::size_t j = 0; j < 2; ++j) {
    CHECK(grid.failed[grid.index(1, j)] == 1);
    CHECK_FALSE(grid.errors[grid.index(1, j)].empty());
    CHECK(std::isnan(grid.pvalue(1, j)));
    CHECK_FALSE(grid.in_confidence_set(1, j));
  }
  CHECK(grid.failed[grid.index(0, 0)] == 0);

  CHECK_THROWS_AS(invert(data, a, model, StatKind::Logr, {}, {0.0}, 10, 0.05, 1), data_error);
  CHECK_THROWS_AS(invert(data, a, model, StatKind::Logr, {0.0}, {0.0}, 10, 1.5, 1), data_error);
}

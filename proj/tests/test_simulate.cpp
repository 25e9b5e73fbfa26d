#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <vector>

#include "netperm/interference.hpp"
#include "netperm/rng.hpp"
#include "netperm/simulate.hpp"

using namespace netperm;

namespace {

InterferenceMatrix isolated_nodes(std::size_t n) {
  InterferenceMatrix a;
  a.rows.assign(n, {});
  a.row_sums.assign(n, 0);
  return a;
}

InterferenceMatrix mutual_pair() {
  const std::vector<std::pair<std::int32_t, std::int32_t>> edges = {{0, 1}};
  return build_from_edges(edges, 2, true);
}

}  // namespace

TEST_CASE("gen_uniformity_iid is deterministic with log-normal moments") {
  Rng a = Rng::keyed({900, 0});
  Rng b = Rng::keyed({900, 0});
  CHECK(gen_uniformity_iid(50, 4.5, 0.25, a) == gen_uniformity_iid(50, 4.5, 0.25, b));

  Rng big = Rng::keyed({900, 1});
  const auto y = gen_uniformity_iid(20000, 4.5, 0.25, big);
  double mean = 0.0;
  for (double v : y) {
    REQUIRE(v > 0.0);
    mean += std::log(v);
  }
  mean /= static_cast<double>(y.size());
  double var = 0.0;
  for (double v : y) var += (std::log(v) - mean) * (std::log(v) - mean);
  var /= static_cast<double>(y.size());
  CHECK(mean == Catch::Approx(4.5).margin(0.01));
  CHECK(std::sqrt(var) == Catch::Approx(0.25).margin(0.005));

  Rng r = Rng::keyed({900, 2});
  CHECK_THROWS_AS(gen_uniformity_iid(5, 4.5, 0.0, r), data_error);
}

TEST_CASE("gen_correlation produces a symmetric unit-diagonal factorizable matrix") {
  Rng net_rng = Rng::keyed({901, 0});
  const auto a = gen_poisson_neighbors(12, 4.0, net_rng);
  Rng rr = Rng::keyed({901, 1});
  const auto spec = gen_correlation(a, rr);

  const std::size_t n = 12;
  for (std::size_t i = 0; i < n; ++i) {
    CHECK(spec.rho(i, i) == Catch::Approx(1.0).margin(1e-12));
    for (std::size_t j = 0; j < i; ++j) {
      CHECK(spec.rho(i, j) == spec.rho(j, i));
      CHECK(spec.rho(i, j) >= 0.0);
    }
  }
  // the stored factor actually reproduces rho
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k <= j; ++k) s += spec.chol(i, k) * spec.chol(j, k);
      CHECK(s == Catch::Approx(spec.rho(i, j)).margin(1e-9));
    }
  }
}

TEST_CASE("a mutual pair forces the documented ridge repair") {
  const auto a = mutual_pair();
  Rng rr = Rng::keyed({902, 0});
  const auto spec = gen_correlation(a, rr);
  // off-diagonal is U+U' in [1.8, 2] before repair, far from positive
  // definite, so a large renormalized ridge is required
  CHECK(spec.ridge_added > 0.0);
  CHECK(spec.rho(0, 0) == Catch::Approx(1.0).margin(1e-12));
  CHECK(spec.rho(0, 1) < 1.0);
  CHECK(spec.rho(0, 1) > 0.4);
  CHECK(spec.chol(1, 1) > 0.0);
}

TEST_CASE("isolated nodes give the identity correlation and reduce to iid draws") {
  const auto a = isolated_nodes(8);
  Rng rr = Rng::keyed({903, 0});
  const auto spec = gen_correlation(a, rr);
  CHECK(spec.ridge_added == 0.0);
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 8; ++j) CHECK(spec.rho(i, j) == (i == j ? 1.0 : 0.0));

  Rng c = Rng::keyed({903, 1});
  Rng d = Rng::keyed({903, 1});
  CHECK(gen_uniformity_correlated(4.5, 0.25, spec, c) == gen_uniformity_iid(8, 4.5, 0.25, d));
}

TEST_CASE("correlated draws reproduce the requested correlation") {
  CorrelationSpec spec;
  spec.rho = Matrix(3, 3);
  spec.rho(0, 0) = spec.rho(1, 1) = spec.rho(2, 2) = 1.0;
  spec.rho(0, 1) = spec.rho(1, 0) = 0.5;
  REQUIRE(detail::cholesky_factor(spec.rho, spec.chol));

  const std::size_t reps = 20000;
  std::vector<double> l0(reps), l1(reps), l2(reps);
  for (std::size_t r = 0; r < reps; ++r) {
    Rng rng = Rng::keyed({904, r});
    const auto y = gen_uniformity_correlated(4.5, 0.25, spec, rng);
    l0[r] = std::log(y[0]);
    l1[r] = std::log(y[1]);
    l2[r] = std::log(y[2]);
  }
  auto corr = [&](const std::vector<double>& u, const std::vector<double>& v) {
    double mu = 0.0, mv = 0.0;
    for (std::size_t r = 0; r < reps; ++r) {
      mu += u[r];
      mv += v[r];
    }
    mu /= reps;
    mv /= reps;
    double suv = 0.0, suu = 0.0, svv = 0.0;
    for (std::size_t r = 0; r < reps; ++r) {
      suv += (u[r] - mu) * (v[r] - mv);
      suu += (u[r] - mu) * (u[r] - mu);
      svv += (v[r] - mv) * (v[r] - mv);
    }
    return suv / std::sqrt(suu * svv);
  };
  CHECK(corr(l0, l1) == Catch::Approx(0.5).margin(0.02));
  CHECK(corr(l0, l2) == Catch::Approx(0.0).margin(0.03));

  double mean = 0.0;
  for (double v : l0) mean += v;
  CHECK(mean / reps == Catch::Approx(4.5).margin(0.01));
}

TEST_CASE("gen_observed enforces the censoring mechanism exactly") {
  Rng net_rng = Rng::keyed({905, 0});
  const auto a = gen_poisson_neighbors(60, 6.0, net_rng);
  GenParams p;
  p.k = 0.6;
  Rng zr = Rng::keyed({905, 1});
  auto z = sample_assignment(60, 30, zr);
  Rng yr = Rng::keyed({905, 2});
  const auto y0 = gen_uniformity_iid(60, p.mu, p.sigma, yr);
  Rng dr = Rng::keyed({905, 3});
  const auto data = gen_observed(y0, a, std::vector<std::uint8_t>(z), p, nullptr, dr);

  const double c_admin = std::exp(p.mu + 2.0 * p.sigma + p.tau_true);
  const Exposures e = compute_exposures(a, data.z);
  for (std::size_t i = 0; i < 60; ++i) {
    const double failure = y0[i] * std::exp(p.delta_true * data.z[i] + p.tau_true * e.proportion[i]);
    if (data.d[i]) {
      CHECK(data.y[i] == failure);
    } else {
      CHECK(data.y[i] < failure);
    }
    if (data.z[i]) {
      CHECK(data.y[i] <= c_admin);
    } else {
      CHECK(data.y[i] <= p.k * c_admin);
      if (!data.d[i]) CHECK(data.y[i] == p.k * c_admin);
    }
  }
}

TEST_CASE("study failure fractions match the design's censoring regime") {
  // m=124 with k=1 is the heaviest-censored treated arm of the reference
  // designs, whose reported average failure fractions run from 11% (this
  // setting, rounded to the percent) up to 24%; the control arm runs 59%
  // to 100%. Allow Monte Carlo slack below the rounded lower endpoint.
  SimConfig cfg;
  cfg.n = 128;
  cfg.m = 124;
  cfg.net_mean = 16.0;
  cfg.replicates = 60;
  cfg.draws = 2;
  cfg.stats = {StatKind::Logr};
  cfg.master_seed = 77;
  const auto res = run_type1(cfg);

  REQUIRE(res.replicate_failures == 0);
  double p1 = 0.0, p0 = 0.0;
  for (std::size_t r = 0; r < cfg.replicates; ++r) {
    p1 += res.p1[r];
    p0 += res.p0[r];
  }
  p1 /= static_cast<double>(cfg.replicates);
  p0 /= static_cast<double>(cfg.replicates);
  CHECK(p1 > 0.095);
  CHECK(p1 < 0.24);
  CHECK(p0 > 0.59);
  CHECK(p0 <= 1.0);
}

TEST_CASE("studies are deterministic for any thread count and replicate-major") {
  SimConfig cfg;
  cfg.n = 20;
  cfg.m = 10;
  cfg.net_mean = 4.0;
  cfg.replicates = 6;
  cfg.draws = 31;
  cfg.stats = {StatKind::Logr};
  cfg.master_seed = 888;

  const auto seq = run_type1(cfg, nullptr, 1);
  const auto par = run_type1(cfg, nullptr, 3);
  REQUIRE(seq.rows.size() == par.rows.size());
  REQUIRE(seq.rows.size() == 6 * 2);  // two methods x one stat per replicate
  for (std::size_t i = 0; i < seq.rows.size(); ++i) {
    CHECK(seq.rows[i].pvalue == par.rows[i].pvalue);
    CHECK(seq.rows[i].extreme_count == par.rows[i].extreme_count);
    CHECK(seq.rows[i].ok == par.rows[i].ok);
  }
  for (std::size_t r = 0; r < 6; ++r) {
    CHECK(seq.p1[r] == par.p1[r]);
    CHECK(seq.p0[r] == par.p0[r]);
    for (std::size_t t = 0; t < 2; ++t) {
      const auto& row = seq.rows[r * 2 + t];
      CHECK(row.replicate == r);
      CHECK(row.method == seq.tasks[t].method);
      CHECK(row.stat == seq.tasks[t].stat);
    }
  }

  // a correlated run on the same scale also reproduces itself
  cfg.correlated = true;
  cfg.replicates = 3;
  const auto c1 = run_type1(cfg, nullptr, 1);
  const auto c2 = run_type1(cfg, nullptr, 2);
  for (std::size_t i = 0; i < c1.rows.size(); ++i) CHECK(c1.rows[i].pvalue == c2.rows[i].pvalue);
}

TEST_CASE("rate tables aggregate over surviving rows only") {
  StudyResult res;
  res.tasks = {{Method::Ipz, StatKind::Logr, {0.7, 2.8}}, {Method::FixedD, StatKind::Lraft, {0.7, 3.2}}};
  auto add_rep = [&](std::uint64_t r, double pv_a, double pv_b, bool ok_b) {
    StudyRow a;
    a.replicate = r;
    a.method = Method::Ipz;
    a.stat = StatKind::Logr;
    a.pvalue = pv_a;
    a.ok = true;
    StudyRow b;
    b.replicate = r;
    b.method = Method::FixedD;
    b.stat = StatKind::Lraft;
    b.pvalue = pv_b;
    b.ok = ok_b;
    res.rows.push_back(a);
    res.rows.push_back(b);
  };
  add_rep(0, 0.02, 0.50, true);
  add_rep(1, 0.80, 0.01, true);
  add_rep(2, 0.04, 0.30, false);

  const auto rej = rejection_table(res, 0.05);
  REQUIRE(rej.size() == 2);
  CHECK(rej[0].used == 3);
  CHECK(rej[0].rate == Catch::Approx(2.0 / 3.0));
  CHECK(rej[1].used == 2);
  CHECK(rej[1].rate == Catch::Approx(0.5));
  CHECK(rej[1].delta0 == 0.7);
  CHECK(rej[1].tau0 == 3.2);

  const auto inc = inclusion_table(res, 0.05);
  CHECK(inc[0].rate == Catch::Approx(1.0 / 3.0));
  CHECK(inc[1].rate == Catch::Approx(0.5));
}

TEST_CASE("study configuration is validated up front") {
  SimConfig cfg;
  cfg.theta0_points.clear();
  CHECK_THROWS_AS(run_power(cfg), data_error);

  SimConfig bad = cfg;
  bad.m = bad.n;
  bad.theta0_points = {{0.7, 2.8}};
  CHECK_THROWS_AS(run_power(bad), data_error);

  SimConfig zero_draws = cfg;
  zero_draws.draws = 0;
  zero_draws.theta0_points = {{0.7, 2.8}};
  CHECK_THROWS_AS(run_power(zero_draws), data_error);

  SimConfig bad_k = cfg;
  bad_k.k = 0.0;
  CHECK_THROWS_AS(run_type1(bad_k), data_error);
}

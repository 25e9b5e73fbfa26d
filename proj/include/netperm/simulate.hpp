#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "netperm/causal.hpp"
#include "netperm/common.hpp"
#include "netperm/inference.hpp"
#include "netperm/interference.hpp"
#include "netperm/parallel.hpp"
#include "netperm/randomize.hpp"
#include "netperm/rng.hpp"

namespace netperm {

inline std::vector<double> gen_uniformity_iid(std::size_t n, double mu, double sigma, Rng& rng) {
  if (!(sigma > 0)) throw data_error("gen_uniformity_iid: sigma must be positive");
  std::vector<double> out(n);
  for (auto& v : out) v = std::exp(mu + sigma * rng.normal());
  return out;
}

namespace detail {

inline bool cholesky_factor(const Matrix& m, Matrix& lower) {
  const std::size_t n = m.nrow();
  lower = Matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = m(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= lower(i, k) * lower(j, k);
      if (i == j) {
        if (!(s > 0)) return false;
        lower(i, i) = std::sqrt(s);
      } else {
        lower(i, j) = s / lower(j, j);
      }
    }
  }
  return true;
}

}  // namespace detail

/// Correlation for log failure and dropout times: rho_ij = Atilde_ij +
/// Atilde_ji with Atilde_ij = (A_ij / A_i) U_ij, U ~ Uniform(0.9, 1), unit
/// diagonal. That construction is not positive definite in general, so a
/// diagonal ridge (smallest working value from 1e-8 * 2^k, renormalized back
/// to unit diagonal) repairs it when the factorization fails.
struct CorrelationSpec {
  Matrix rho;
  Matrix chol;  // lower-triangular factor of rho
  double ridge_added = 0.0;
};

inline CorrelationSpec gen_correlation(const InterferenceMatrix& a, Rng& rng) {
  const std::size_t n = a.n();
  CorrelationSpec spec;
  spec.rho = Matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) spec.rho(i, i) = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (a.row_sums[i] == 0) continue;
    const double inv = 1.0 / a.row_sums[i];
    for (std::int32_t j : a.rows[i]) {
      const double v = inv * rng.uniform(0.9, 1.0);
      const auto jj = static_cast<std::size_t>(j);
      spec.rho(i, jj) += v;
      spec.rho(jj, i) += v;
    }
  }
  if (detail::cholesky_factor(spec.rho, spec.chol)) return spec;
  for (int k = 0; k < 64; ++k) {
    const double eps = 1e-8 * std::pow(2.0, k);
    Matrix cand(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        cand(i, j) = (spec.rho(i, j) + (i == j ? eps : 0.0)) / (1.0 + eps);
    if (detail::cholesky_factor(cand, spec.chol)) {
      spec.rho = std::move(cand);
      spec.ridge_added = eps;
      return spec;
    }
  }
  throw numeric_error("correlation repair failed: no ridge in the search made rho factorizable");
}

inline std::vector<double> gen_uniformity_correlated(double mu, double sigma, const CorrelationSpec& rho,
                                                     Rng& rng) {
  const std::size_t n = rho.rho.nrow();
  std::vector<double> g(n), out(n);
  for (auto& v : g) v = rng.normal();
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j <= i; ++j) s += rho.chol(i, j) * g[j];
    out[i] = std::exp(mu + sigma * s);
  }
  return out;
}

struct GenParams {
  double delta_true = 0.7;
  double tau_true = 2.8;
  double mu = 4.5;
  double sigma = 0.25;
  double omega = 0.96824583655185426;  // sqrt(1 - 0.25^2)
  double k = 1.0;                      // control-arm censoring fraction
};

/// One synthetic trial. Failure times Ytilde_i = y0_i exp(delta z_i + tau
/// G_i); dropout log-times N(mu + tau G_i, omega^2) (jointly correlated when
/// rho is given), drawn for everyone; administrative horizon C' =
/// exp(mu + 2 sigma + tau). Treated arm censors at min(C', dropout); control
/// arm has no dropout and censors at k C'. Y = min(failure, censoring),
/// D = 1{failure <= censoring}.
inline ObservedData gen_observed(std::span<const double> y0_true, const InterferenceMatrix& a,
                                 std::vector<std::uint8_t> z, const GenParams& p,
                                 const CorrelationSpec* rho, Rng& rng) {
  const std::size_t n = y0_true.size();
  if (a.n() != n || z.size() != n) throw data_error("gen_observed: shape mismatch");
  ObservedData data;
  data.z = std::move(z);
  data.y.resize(n);
  data.d.resize(n);
  const Exposures e = compute_exposures(a, data.z);
  const double c_admin = std::exp(p.mu + 2.0 * p.sigma + p.tau_true);

  std::vector<double> noise(n);
  for (auto& v : noise) v = rng.normal();
  if (rho) {
    std::vector<double> mixed(n);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j <= i; ++j) s += rho->chol(i, j) * noise[j];
      mixed[i] = s;
    }
    noise = std::move(mixed);
  }

  for (std::size_t i = 0; i < n; ++i) {
    const double failure = y0_true[i] * std::exp(p.delta_true * data.z[i] + p.tau_true * e.proportion[i]);
    double censor;
    if (data.z[i]) {
      const double dropout = std::exp(p.mu + p.tau_true * e.proportion[i] + p.omega * noise[i]);
      censor = std::min(c_admin, dropout);
    } else {
      censor = p.k * c_admin;
    }
    data.d[i] = failure <= censor ? 1 : 0;
    data.y[i] = data.d[i] ? failure : censor;
  }
  return data;
}

enum class NetKind { Poisson, Pa, File };

struct SimConfig {
  std::size_t n = 128;
  std::size_t m = 96;
  NetKind net_kind = NetKind::Poisson;
  double net_mean = 16.0;
  std::size_t net_edges = 8;
  bool net_symmetrize = false;
  bool network_per_replicate = false;
  double mu = 4.5;
  double sigma = 0.25;
  double omega = 0.96824583655185426;
  double delta_true = 0.7;
  double tau_true = 2.8;
  double k = 1.0;
  bool correlated = false;
  std::uint64_t replicates = 500;
  std::uint64_t draws = 1000;
  std::vector<StatKind> stats{StatKind::Logr, StatKind::Lraft};
  std::vector<Theta> theta0_points;
  double alpha = 0.05;
  std::uint64_t master_seed = 1;
  CausalModelSpec model{};

  void validate() const {
    if (n < 2 || m == 0 || m >= n) throw data_error("config: need 0 < m < n and n >= 2");
    if (!(sigma > 0)) throw data_error("config: sigma must be positive");
    if (!(omega > 0)) throw data_error("config: omega must be positive");
    if (!(k > 0.0 && k <= 1.0)) throw data_error("config: k must be in (0,1]");
    if (replicates == 0) throw data_error("config: replicates must be positive");
    if (draws == 0) throw data_error("config: draws must be positive");
    if (stats.empty()) throw data_error("config: at least one statistic required");
    if (!(alpha > 0.0 && alpha < 1.0)) throw data_error("config: alpha must be in (0,1)");
  }

  GenParams gen_params() const { return GenParams{delta_true, tau_true, mu, sigma, omega, k}; }
};

struct StudyTask {
  Method method = Method::Ipz;
  StatKind stat = StatKind::Logr;
  Theta theta0{};
};

struct StudyRow {
  std::uint64_t replicate = 0;
  Method method = Method::Ipz;
  StatKind stat = StatKind::Logr;
  double delta0 = 0.0;
  double tau0 = 0.0;
  double pvalue = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t draws_used = 0;
  std::uint64_t extreme_count = 0;
  std::uint64_t nonconverged_fits = 0;
  std::uint64_t failed_draws = 0;
  bool ok = false;
  std::string error;
};

struct StudyResult {
  std::vector<StudyTask> tasks;
  std::vector<StudyRow> rows;  // replicate-major, task order within replicate
  std::vector<double> p1, p0;  // per-replicate observed failure fractions (NaN on failure)
  std::vector<std::string> replicate_errors;  // "" when the replicate generated fine
  std::uint64_t replicate_failures = 0;
  std::uint64_t row_failures = 0;
  std::uint64_t total_nonconverged = 0;
  std::uint64_t total_draw_failures = 0;
  double ridge_added = 0.0;
};

namespace detail {

inline constexpr std::uint64_t tag_net = 0x6e;
inline constexpr std::uint64_t tag_rho = 0x72;
inline constexpr std::uint64_t tag_z = 0x7a;
inline constexpr std::uint64_t tag_y0 = 0x79;
inline constexpr std::uint64_t tag_drop = 0x64;
inline constexpr std::uint64_t tag_test = 0x74;

inline InterferenceMatrix build_sim_network(const SimConfig& cfg, std::uint64_t key) {
  Rng rng(key);
  InterferenceMatrix net;
  switch (cfg.net_kind) {
    case NetKind::Poisson:
      net = gen_poisson_neighbors(cfg.n, cfg.net_mean, rng);
      break;
    case NetKind::Pa:
      net = gen_preferential_attachment(cfg.n, cfg.net_edges, rng);
      break;
    case NetKind::File:
      throw data_error("file-based networks must be loaded by the caller");
  }
  if (cfg.net_symmetrize) net = symmetrized(net);
  return net;
}

}  // namespace detail

/// Shared replicate loop: per replicate, draw Z and a fresh dataset, then
/// run every task (method, statistic, theta0) on it with independent derived
/// seeds. Failures are recorded per replicate and per row; the run
/// continues. Rows come back replicate-major, so output ordering does not
/// depend on the thread count.
inline StudyResult run_study(const SimConfig& cfg, std::vector<StudyTask> tasks,
                             const InterferenceMatrix* fixed_network = nullptr, int threads = 0) {
  cfg.validate();
  if (tasks.empty()) throw data_error("study: no tasks");

  InterferenceMatrix generated;
  const InterferenceMatrix* study_net = fixed_network;
  if (!study_net && !cfg.network_per_replicate) {
    generated = detail::build_sim_network(cfg, derive_key({cfg.master_seed, detail::tag_net}));
    study_net = &generated;
  }
  std::optional<CorrelationSpec> study_rho;
  if (cfg.correlated && study_net) {
    Rng rr(derive_key({cfg.master_seed, detail::tag_rho}));
    study_rho = gen_correlation(*study_net, rr);
  }

  StudyResult out;
  out.tasks = tasks;
  const std::size_t reps = cfg.replicates;
  const std::size_t per_rep = tasks.size();
  out.rows.resize(reps * per_rep);
  out.p1.assign(reps, std::numeric_limits<double>::quiet_NaN());
  out.p0.assign(reps, std::numeric_limits<double>::quiet_NaN());
  out.replicate_errors.assign(reps, "");
  if (study_rho) out.ridge_added = study_rho->ridge_added;

  const GenParams params = cfg.gen_params();
  parallel_for(reps, threads, [&](std::size_t r) {
    const std::uint64_t rep_key = derive_key({cfg.master_seed, r});
    for (std::size_t t = 0; t < per_rep; ++t) {
      StudyRow& row = out.rows[r * per_rep + t];
      row.replicate = r;
      row.method = tasks[t].method;
      row.stat = tasks[t].stat;
      row.delta0 = tasks[t].theta0.delta;
      row.tau0 = tasks[t].theta0.tau;
    }
    try {
      const InterferenceMatrix* net = study_net;
      InterferenceMatrix local_net;
      const CorrelationSpec* rho = study_rho ? &*study_rho : nullptr;
      CorrelationSpec local_rho;
      if (cfg.network_per_replicate) {
        local_net = detail::build_sim_network(cfg, derive_key({rep_key, detail::tag_net}));
        net = &local_net;
        if (cfg.correlated) {
          Rng rr(derive_key({rep_key, detail::tag_rho}));
          local_rho = gen_correlation(local_net, rr);
          rho = &local_rho;
        }
      }
      Rng zr(derive_key({rep_key, detail::tag_z}));
      std::vector<std::uint8_t> z = sample_assignment(cfg.n, cfg.m, zr);
      Rng yr(derive_key({rep_key, detail::tag_y0}));
      std::vector<double> y0 = rho ? gen_uniformity_correlated(cfg.mu, cfg.sigma, *rho, yr)
                                   : gen_uniformity_iid(cfg.n, cfg.mu, cfg.sigma, yr);
      Rng dr(derive_key({rep_key, detail::tag_drop}));
      const ObservedData data = gen_observed(y0, *net, std::move(z), params, rho, dr);

      std::size_t n1 = 0, n0 = 0, e1 = 0, e0 = 0;
      for (std::size_t i = 0; i < data.n(); ++i) {
        if (data.z[i]) {
          ++n1;
          e1 += data.d[i];
        } else {
          ++n0;
          e0 += data.d[i];
        }
      }
      out.p1[r] = static_cast<double>(e1) / static_cast<double>(n1);
      out.p0[r] = static_cast<double>(e0) / static_cast<double>(n0);

      for (std::size_t t = 0; t < per_rep; ++t) {
        StudyRow& row = out.rows[r * per_rep + t];
        try {
          const std::uint64_t test_seed = derive_key({rep_key, detail::tag_test, t});
          const TestResult res = run_test(tasks[t].method, data, *net, cfg.model, tasks[t].theta0,
                                          tasks[t].stat, cfg.draws, test_seed, false, 1);
          row.pvalue = res.pvalue;
          row.draws_used = res.draws_used;
          row.extreme_count = res.extreme_count;
          row.nonconverged_fits = res.nonconverged_fits;
          row.failed_draws = res.failed_draws;
          row.ok = true;
        } catch (const std::exception& e) {
          row.error = e.what();
        }
      }
    } catch (const std::exception& e) {
      out.replicate_errors[r] = e.what();
    }
  });

  for (std::size_t r = 0; r < reps; ++r)
    if (!out.replicate_errors[r].empty()) ++out.replicate_failures;
  for (const auto& row : out.rows) {
    if (!row.ok && out.replicate_errors[row.replicate].empty() && !row.error.empty()) ++out.row_failures;
    if (row.ok) {
      out.total_nonconverged += row.nonconverged_fits;
      out.total_draw_failures += row.failed_draws;
    }
  }
  return out;
}

/// Type-I study: both methods and every configured statistic at the true
/// (delta, tau).
inline StudyResult run_type1(const SimConfig& cfg, const InterferenceMatrix* network = nullptr,
                             int threads = 0) {
  std::vector<StudyTask> tasks;
  const Theta truth{cfg.delta_true, cfg.tau_true};
  for (Method method : {Method::FixedD, Method::Ipz})
    for (StatKind s : cfg.stats) tasks.push_back({method, s, truth});
  return run_study(cfg, std::move(tasks), network, threads);
}

/// Power study: the censoring-aware test at every configured theta0 point.
inline StudyResult run_power(const SimConfig& cfg, const InterferenceMatrix* network = nullptr,
                             int threads = 0) {
  if (cfg.theta0_points.empty()) throw data_error("power study: theta0 grid points required");
  std::vector<StudyTask> tasks;
  for (const Theta& theta0 : cfg.theta0_points)
    for (StatKind s : cfg.stats) tasks.push_back({Method::Ipz, s, theta0});
  return run_study(cfg, std::move(tasks), network, threads);
}

/// Coverage study: identical run to power; the aggregation differs (include
/// a point when pvalue >= alpha).
inline StudyResult run_coverage(const SimConfig& cfg, const InterferenceMatrix* network = nullptr,
                                int threads = 0) {
  if (cfg.theta0_points.empty()) throw data_error("coverage study: theta0 grid points required");
  std::vector<StudyTask> tasks;
  for (const Theta& theta0 : cfg.theta0_points)
    for (StatKind s : cfg.stats) tasks.push_back({Method::Ipz, s, theta0});
  return run_study(cfg, std::move(tasks), network, threads);
}

struct RateCell {
  Method method = Method::Ipz;
  StatKind stat = StatKind::Logr;
  double delta0 = 0.0;
  double tau0 = 0.0;
  double rate = 0.0;       // rejection (pv <= alpha) or inclusion (pv >= alpha)
  std::uint64_t used = 0;  // rows contributing
};

inline std::vector<RateCell> rejection_table(const StudyResult& res, double alpha) {
  std::vector<RateCell> cells(res.tasks.size());
  const std::size_t per_rep = res.tasks.size();
  for (std::size_t t = 0; t < per_rep; ++t) {
    RateCell& c = cells[t];
    c.method = res.tasks[t].method;
    c.stat = res.tasks[t].stat;
    c.delta0 = res.tasks[t].theta0.delta;
    c.tau0 = res.tasks[t].theta0.tau;
    std::uint64_t hits = 0;
    for (std::size_t r = 0; r * per_rep + t < res.rows.size(); ++r) {
      const StudyRow& row = res.rows[r * per_rep + t];
      if (!row.ok) continue;
      ++c.used;
      hits += row.pvalue <= alpha ? 1 : 0;
    }
    c.rate = c.used ? static_cast<double>(hits) / static_cast<double>(c.used) : 0.0;
  }
  return cells;
}

inline std::vector<RateCell> inclusion_table(const StudyResult& res, double alpha) {
  std::vector<RateCell> cells = rejection_table(res, alpha);
  const std::size_t per_rep = res.tasks.size();
  for (std::size_t t = 0; t < per_rep; ++t) {
    RateCell& c = cells[t];
    std::uint64_t hits = 0;
    c.used = 0;
    for (std::size_t r = 0; r * per_rep + t < res.rows.size(); ++r) {
      const StudyRow& row = res.rows[r * per_rep + t];
      if (!row.ok) continue;
      ++c.used;
      hits += row.pvalue >= alpha ? 1 : 0;
    }
    c.rate = c.used ? static_cast<double>(hits) / static_cast<double>(c.used) : 0.0;
  }
  return cells;
}

}  // namespace netperm

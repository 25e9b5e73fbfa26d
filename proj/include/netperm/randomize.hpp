#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "netperm/aft.hpp"
#include "netperm/causal.hpp"
#include "netperm/common.hpp"
#include "netperm/interference.hpp"
#include "netperm/parallel.hpp"
#include "netperm/rng.hpp"
#include "netperm/step_cdf.hpp"
#include "netperm/survival.hpp"

namespace netperm {

enum class Method { FixedD, Ipz };
enum class StatKind { Logr, Lraft, Ks };

inline StatKind parse_stat(const std::string& s) {
  if (s == "logr") return StatKind::Logr;
  if (s == "lraft") return StatKind::Lraft;
  if (s == "ks") return StatKind::Ks;
  throw data_error("unknown statistic '" + s + "' (expected logr, lraft, or ks)");
}

inline std::string stat_string(StatKind k) {
  switch (k) {
    case StatKind::Logr: return "logr";
    case StatKind::Lraft: return "lraft";
    case StatKind::Ks: return "ks";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  if (s == "ipz") return Method::Ipz;
  if (s == "fixed-d" || s == "fixed_d") return Method::FixedD;
  throw data_error("unknown method '" + s + "' (expected ipz or fixed-d)");
}

inline std::string method_string(Method m) { return m == Method::FixedD ? "fixed-d" : "ipz"; }

/// One trial's observations: time Y = min(failure, censoring), failure
/// indicator D, treatment Z, and optional participation denominators B.
struct ObservedData {
  std::vector<double> y;
  std::vector<std::uint8_t> d;
  std::vector<std::uint8_t> z;
  std::vector<double> b;

  std::size_t n() const { return y.size(); }

  std::size_t treated_count() const {
    std::size_t m = 0;
    for (auto v : z) m += v ? 1 : 0;
    return m;
  }

  void validate() const {
    const std::size_t count = y.size();
    if (count < 2) throw data_error("need at least two observations");
    if (d.size() != count || z.size() != count) throw data_error("column lengths differ");
    if (!b.empty() && b.size() != count) throw data_error("denominator column length differs");
    for (std::size_t i = 0; i < count; ++i) {
      if (!(y[i] > 0)) throw data_error("y must be positive (row " + std::to_string(i) + ")");
      if (d[i] > 1) throw data_error("d must be 0 or 1 (row " + std::to_string(i) + ")");
      if (z[i] > 1) throw data_error("z must be 0 or 1 (row " + std::to_string(i) + ")");
      if (!b.empty() && !(b[i] >= 0)) throw data_error("b must be nonnegative (row " + std::to_string(i) + ")");
    }
    const std::size_t m = treated_count();
    if (m == 0 || m == count) throw data_error("both treatment arms must be nonempty");
  }
};

struct TestResult {
  double statistic_observed = 0.0;
  double pvalue = 1.0;
  std::uint64_t draws_used = 0;
  std::uint64_t extreme_count = 0;
  std::uint64_t nonconverged_fits = 0;
  std::uint64_t failed_draws = 0;
  std::uint64_t seed = 0;
  Method method = Method::Ipz;
  StatKind stat_kind = StatKind::Logr;
  bool exact = false;
  bool observed_zero_variance = false;
};

/// Uniform draw from {z : sum z = m} by partial Fisher-Yates on the indices.
inline std::vector<std::uint8_t> sample_assignment(std::size_t n, std::size_t m, Rng& rng) {
  if (m == 0 || m >= n) throw data_error("sample_assignment: need 0 < m < n");
  std::vector<std::uint32_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t j = k + rng.below(n - k);
    std::swap(idx[k], idx[j]);
  }
  std::vector<std::uint8_t> z(n, 0);
  for (std::size_t k = 0; k < m; ++k) z[idx[k]] = 1;
  return z;
}

/// C(n, m) with a cap: returns cap + 1 as soon as the count exceeds cap,
/// keeping the arithmetic overflow-free.
inline std::uint64_t count_assignments(std::uint64_t n, std::uint64_t m, std::uint64_t cap) {
  if (m > n) return 0;
  if (m > n - m) m = n - m;
  std::uint64_t r = 1;
  for (std::uint64_t i = 1; i <= m; ++i) {
    r = r * (n - m + i) / i;
    if (r > cap) return cap + 1;
  }
  return r;
}

/// The rank-th assignment in lexicographic order over chosen index sets
/// (rank 0 treats indices 0..m-1). Every needed binomial is at most C(n,m),
/// so the same cap bounds the arithmetic.
inline void unrank_assignment(std::size_t n, std::size_t m, std::uint64_t rank, std::uint64_t cap,
                              std::vector<std::uint8_t>& z) {
  z.assign(n, 0);
  std::size_t next = 0;
  std::uint64_t r = rank;
  for (std::size_t j = 0; j < m; ++j) {
    const std::size_t left = m - j;
    for (std::size_t a = next;; ++a) {
      if (a >= n) throw numeric_error("unrank_assignment: rank out of range");
      const std::uint64_t cnt = count_assignments(n - 1 - a, left - 1, cap);
      if (r < cnt) {
        z[a] = 1;
        next = a + 1;
        break;
      }
      r -= cnt;
    }
  }
}

/// Add-one Monte-Carlo p-value with the >= tie rule.
inline double pvalue_from_draws(double observed, std::span<const double> draws) {
  if (draws.empty()) throw data_error("pvalue_from_draws: no draws");
  if (!std::isfinite(observed)) throw data_error("pvalue_from_draws: observed statistic is not finite");
  std::size_t k = 0;
  for (double v : draws) k += v >= observed ? 1 : 0;
  return (1.0 + static_cast<double>(k)) / (static_cast<double>(draws.size()) + 1.0);
}

namespace detail {

inline constexpr std::uint64_t tag_assign = 0x61;
inline constexpr std::uint64_t tag_impute = 0x69;
inline constexpr std::uint64_t tag_censor = 0x63;

struct StatEval {
  double value = 0.0;
  bool failed = false;
  bool nonconverged = false;
  bool zero_variance = false;
};

struct EngineContext {
  const InterferenceMatrix* a = nullptr;
  CausalModelSpec model;
  std::span<const double> b;
};

inline StatEval eval_statistic(StatKind kind, std::span<const double> y0, std::span<const std::uint8_t> d,
                               std::span<const std::uint8_t> z, const EngineContext& ctx,
                               bool propagate = false) {
  StatEval out;
  try {
    switch (kind) {
      case StatKind::Logr: {
        bool zero = false;
        out.value = logrank(y0, d, z, &zero);
        out.zero_variance = zero;
        break;
      }
      case StatKind::Lraft: {
        const Exposures e = compute_exposures(*ctx.a, z, ctx.b);
        const std::vector<double> expo = select_exposures(e, ctx.model.exposure_mode);
        const AftFit fit = lraft_fit(y0, d, z, expo, ctx.a->row_sums);
        // likelihood-ratio form: subtracting the intercept-only maximum makes
        // the statistic comparable across draws whose imputed datasets (and
        // hence raw likelihood scales) differ
        const AftFit base = aft_intercept_only(y0, d);
        out.value = fit.loglik - base.loglik;
        out.nonconverged = !fit.converged || !base.converged;
        break;
      }
      case StatKind::Ks: {
        for (auto di : d)
          if (!di) throw data_error("ks statistic requires fully uncensored data");
        out.value = ks_stat(y0, z);
        break;
      }
    }
    if (!std::isfinite(out.value)) out.failed = true;
  } catch (const std::exception&) {
    if (propagate) throw;
    out.failed = true;
  }
  return out;
}

/// Counts over per-draw evaluations; a failed draw counts as extreme
/// (conservative) and is reported separately.
inline TestResult reduce_draws(const std::vector<StatEval>& evals, const StatEval& observed) {
  TestResult r;
  r.statistic_observed = observed.value;
  r.observed_zero_variance = observed.zero_variance;
  for (const auto& e : evals) {
    if (e.failed) {
      ++r.failed_draws;
      ++r.extreme_count;
    } else if (e.value >= observed.value) {
      ++r.extreme_count;
    }
    if (e.nonconverged) ++r.nonconverged_fits;
  }
  r.draws_used = evals.size();
  r.pvalue = (1.0 + static_cast<double>(r.extreme_count)) / (static_cast<double>(r.draws_used) + 1.0);
  return r;
}

}  // namespace detail

inline constexpr std::uint64_t default_enum_budget = 1'000'000;

/// Naive permutation baseline: the uniformity times and failure indicators
/// stay fixed while the assignment is re-drawn; only exposures and the
/// design/grouping move with z. In exact mode the full assignment space is
/// enumerated and the observed assignment's own draw (which ties the
/// observed statistic by construction) is folded into the add-one form, so
/// the p-value equals the raw enumeration fraction.
inline TestResult test_fixed_censoring(const ObservedData& data, const InterferenceMatrix& a,
                                       const CausalModelSpec& model, Theta theta0, StatKind kind,
                                       std::uint64_t draws, std::uint64_t seed, bool exact = false,
                                       int threads = 0, std::uint64_t enum_budget = default_enum_budget) {
  data.validate();
  if (a.n() != data.n()) throw data_error("network size does not match data size");
  const detail::EngineContext ctx{&a, model, data.b};
  const std::vector<double> y0 = to_uniformity(data.y, data.z, a, model, theta0, data.b);
  const detail::StatEval observed = detail::eval_statistic(kind, y0, data.d, data.z, ctx, true);

  const std::size_t n = data.n();
  const std::size_t m = data.treated_count();
  std::uint64_t total = draws;
  if (exact) {
    total = count_assignments(n, m, enum_budget);
    if (total > enum_budget)
      throw data_error("exact enumeration exceeds the budget of " + std::to_string(enum_budget) + " assignments");
  }
  if (total == 0) throw data_error("draw count must be positive");

  std::vector<detail::StatEval> evals(total);
  parallel_for(total, threads, [&](std::size_t i) {
    std::vector<std::uint8_t> z;
    if (exact) {
      unrank_assignment(n, m, i, enum_budget, z);
    } else {
      Rng zr(derive_key({seed, i, detail::tag_assign}));
      z = sample_assignment(n, m, zr);
    }
    evals[i] = detail::eval_statistic(kind, y0, data.d, z, ctx);
  });

  TestResult r = detail::reduce_draws(evals, observed);
  if (exact) {
    // the observed assignment is one of the enumerated draws and ties itself
    r.draws_used -= 1;
    r.extreme_count -= 1;
    r.pvalue = (1.0 + static_cast<double>(r.extreme_count)) / (static_cast<double>(r.draws_used) + 1.0);
  }
  r.seed = seed;
  r.method = Method::FixedD;
  r.stat_kind = kind;
  r.exact = exact;
  return r;
}

/// The censoring-aware permutation test. Step 1 computes the observed
/// statistic on the uniformity-scale data, the product-limit estimate of the
/// uniformity failure-time CDF, and arm-specific censoring-time estimates.
/// Each draw then imputes censored uniformity failure times above their
/// observed lower bounds (capped at the largest uniformity event time),
/// pushes them through the causal model under the drawn assignment, draws
/// fresh censoring times capped at the arm's largest observed time,
/// re-censors, maps back to uniformity scale, and evaluates the statistic.
inline TestResult test_ipz(const ObservedData& data, const InterferenceMatrix& a,
                           const CausalModelSpec& model, Theta theta0, StatKind kind,
                           std::uint64_t draws, std::uint64_t seed, bool exact = false,
                           int threads = 0, std::uint64_t enum_budget = default_enum_budget) {
  data.validate();
  if (a.n() != data.n()) throw data_error("network size does not match data size");
  const detail::EngineContext ctx{&a, model, data.b};
  const std::vector<double> y0 = to_uniformity(data.y, data.z, a, model, theta0, data.b);
  const detail::StatEval observed = detail::eval_statistic(kind, y0, data.d, data.z, ctx, true);

  const std::size_t n = data.n();
  const std::size_t m = data.treated_count();
  double cap0 = 0.0;
  std::size_t events = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (data.d[i]) {
      ++events;
      cap0 = std::max(cap0, y0[i]);
    }
  }
  if (events == 0)
    throw data_error("no observed failures: the imputation cap is undefined, cannot run the test");
  const StepCdf f0 = km_cdf(y0, data.d);
  const CensoringModel cens = km_censoring_by_group(data.y, data.d, data.z);

  std::uint64_t total = draws;
  if (exact) {
    total = count_assignments(n, m, enum_budget);
    if (total > enum_budget)
      throw data_error("exact enumeration exceeds the budget of " + std::to_string(enum_budget) + " assignments");
  }
  if (total == 0) throw data_error("draw count must be positive");

  std::vector<detail::StatEval> evals(total);
  parallel_for(total, threads, [&](std::size_t idx) {
    const std::uint64_t draw_key = derive_key({seed, idx});
    std::vector<std::uint8_t> z;
    if (exact) {
      unrank_assignment(n, m, idx, enum_budget, z);
    } else {
      Rng zr(derive_key(draw_key, detail::tag_assign));
      z = sample_assignment(n, m, zr);
    }

    // step 3: impute censored uniformity failure times above their bounds
    std::vector<double> ystar(n);
    const std::uint64_t impute_key = derive_key(draw_key, detail::tag_impute);
    for (std::size_t i = 0; i < n; ++i) {
      if (data.d[i]) {
        ystar[i] = y0[i];
        continue;
      }
      Rng ur(derive_key(impute_key, i));
      const double t = sample_truncated(f0, y0[i], cap0, ur.uniform());
      ystar[i] = t > y0[i] ? t : y0[i];
    }
    const std::vector<double> ytilde = from_uniformity(ystar, z, a, model, theta0, data.b);

    // steps 4-5: fresh censoring per arm, then re-censor
    const std::uint64_t censor_key = derive_key(draw_key, detail::tag_censor);
    std::vector<double> ydraw(n);
    std::vector<std::uint8_t> ddraw(n);
    for (std::size_t i = 0; i < n; ++i) {
      const ArmCensoring& arm = cens.arm[z[i] ? 1 : 0];
      Rng ur(derive_key(censor_key, i));
      const double c = sample_truncated(arm.cdf, 0.0, arm.y_max, ur.uniform());
      ddraw[i] = ytilde[i] <= c ? 1 : 0;
      ydraw[i] = ddraw[i] ? ytilde[i] : c;
    }

    // step 6: back to uniformity scale under the drawn assignment
    const std::vector<double> ydag0 = to_uniformity(ydraw, z, a, model, theta0, data.b);
    evals[idx] = detail::eval_statistic(kind, ydag0, ddraw, z, ctx);
  });

  TestResult r = detail::reduce_draws(evals, observed);
  r.seed = seed;
  r.method = Method::Ipz;
  r.stat_kind = kind;
  r.exact = exact;
  return r;
}

inline TestResult run_test(Method method, const ObservedData& data, const InterferenceMatrix& a,
                           const CausalModelSpec& model, Theta theta0, StatKind kind, std::uint64_t draws,
                           std::uint64_t seed, bool exact = false, int threads = 0) {
  return method == Method::Ipz ? test_ipz(data, a, model, theta0, kind, draws, seed, exact, threads)
                               : test_fixed_censoring(data, a, model, theta0, kind, draws, seed, exact, threads);
}

}  // namespace netperm

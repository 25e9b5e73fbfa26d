#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "netperm/common.hpp"
#include "netperm/step_cdf.hpp"

namespace netperm {

/// Kaplan-Meier product-limit estimator of the failure-time CDF.
/// Ties between events and censorings at the same time are resolved
/// events-first: censored individuals at t stay at risk for events at t.
inline StepCdf km_cdf(std::span<const double> times, std::span<const std::uint8_t> events) {
  if (times.size() != events.size()) throw data_error("km_cdf: length mismatch");
  const std::size_t n = times.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return times[a] < times[b]; });

  StepCdf cdf;
  double surv = 1.0;
  std::size_t k = 0;
  while (k < n) {
    const double t = times[order[k]];
    if (!(t > 0)) throw data_error("km_cdf: times must be positive");
    const std::size_t at_risk = n - k;
    std::size_t deaths = 0;
    std::size_t j = k;
    while (j < n && times[order[j]] == t) {
      deaths += events[order[j]];
      ++j;
    }
    if (deaths > 0) {
      surv *= 1.0 - static_cast<double>(deaths) / static_cast<double>(at_risk);
      cdf.jump_times.push_back(t);
      cdf.values.push_back(1.0 - surv);
    }
    k = j;
  }
  cdf.terminal_value = cdf.values.empty() ? 0.0 : cdf.values.back();
  return cdf;
}

/// Per-arm censoring-time distribution: KM over the arm's times with the
/// censoring indicator 1-D, plus the arm's largest observed time and whether
/// that largest time is a censoring time.
struct ArmCensoring {
  StepCdf cdf;
  double y_max = 0.0;
  bool y_max_censored = false;
  std::size_t size = 0;
};

struct CensoringModel {
  ArmCensoring arm[2];
};

inline CensoringModel km_censoring_by_group(std::span<const double> y, std::span<const std::uint8_t> d,
                                            std::span<const std::uint8_t> z) {
  if (y.size() != d.size() || y.size() != z.size()) throw data_error("km_censoring_by_group: length mismatch");
  CensoringModel m;
  std::vector<double> times[2];
  std::vector<std::uint8_t> cens[2];
  for (std::size_t i = 0; i < y.size(); ++i) {
    const int g = z[i] ? 1 : 0;
    times[g].push_back(y[i]);
    cens[g].push_back(static_cast<std::uint8_t>(1 - d[i]));
  }
  for (int g = 0; g < 2; ++g) {
    if (times[g].empty())
      throw data_error("km_censoring_by_group: treatment arm " + std::to_string(g) + " is empty");
    m.arm[g].cdf = km_cdf(times[g], cens[g]);
    m.arm[g].size = times[g].size();
    double ymax = times[g][0];
    bool ymax_cens = cens[g][0] != 0;
    for (std::size_t i = 1; i < times[g].size(); ++i) {
      if (times[g][i] > ymax) {
        ymax = times[g][i];
        ymax_cens = cens[g][i] != 0;
      } else if (times[g][i] == ymax && cens[g][i]) {
        ymax_cens = true;
      }
    }
    m.arm[g].y_max = ymax;
    m.arm[g].y_max_censored = ymax_cens;
  }
  return m;
}

/// Two-sample log-rank chi-square: [sum_k (O_1k - E_1k)]^2 / sum_k V_k over
/// distinct event times, hypergeometric variance, terms with at-risk <= 1
/// skipped. Zero total variance yields 0 with the flag set.
inline double logrank(std::span<const double> times, std::span<const std::uint8_t> events,
                      std::span<const std::uint8_t> group, bool* zero_variance = nullptr) {
  if (times.size() != events.size() || times.size() != group.size())
    throw data_error("logrank: length mismatch");
  const std::size_t n = times.size();
  std::size_t n1 = 0;
  for (auto g : group) n1 += g ? 1 : 0;
  if (n1 == 0 || n1 == n) throw data_error("logrank: both groups must be nonempty");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return times[a] < times[b]; });

  double observed_minus_expected = 0.0;
  double variance = 0.0;
  std::size_t k = 0;
  std::size_t passed = 0, passed1 = 0;  // removed from risk before current time
  while (k < n) {
    const double t = times[order[k]];
    const double r = static_cast<double>(n - passed);
    const double r1 = static_cast<double>(n1 - passed1);
    double deaths = 0, deaths1 = 0;
    std::size_t j = k;
    while (j < n && times[order[j]] == t) {
      const std::size_t i = order[j];
      if (events[i]) {
        deaths += 1;
        if (group[i]) deaths1 += 1;
      }
      ++j;
    }
    if (deaths > 0 && r > 1) {
      observed_minus_expected += deaths1 - deaths * r1 / r;
      variance += deaths * (r1 / r) * (1.0 - r1 / r) * (r - deaths) / (r - 1.0);
    }
    passed += j - k;
    for (std::size_t q = k; q < j; ++q) passed1 += group[order[q]] ? 1 : 0;
    k = j;
  }
  if (variance <= 0.0) {
    if (zero_variance) *zero_variance = true;
    return 0.0;
  }
  if (zero_variance) *zero_variance = false;
  return observed_minus_expected * observed_minus_expected / variance;
}

/// Two-sample Kolmogorov-Smirnov statistic: sup-distance between the group
/// ECDFs. Callers must ensure the data are uncensored; this operates on
/// values alone.
inline double ks_stat(std::span<const double> values, std::span<const std::uint8_t> group) {
  if (values.size() != group.size()) throw data_error("ks_stat: length mismatch");
  std::vector<double> g0, g1;
  for (std::size_t i = 0; i < values.size(); ++i) (group[i] ? g1 : g0).push_back(values[i]);
  if (g0.empty() || g1.empty()) throw data_error("ks_stat: both groups must be nonempty");
  std::sort(g0.begin(), g0.end());
  std::sort(g1.begin(), g1.end());
  const double n0 = static_cast<double>(g0.size());
  const double n1 = static_cast<double>(g1.size());
  std::size_t i0 = 0, i1 = 0;
  double sup = 0.0;
  while (i0 < g0.size() || i1 < g1.size()) {
    double t;
    if (i0 == g0.size()) t = g1[i1];
    else if (i1 == g1.size()) t = g0[i0];
    else t = std::min(g0[i0], g1[i1]);
    while (i0 < g0.size() && g0[i0] == t) ++i0;
    while (i1 < g1.size() && g1[i1] == t) ++i1;
    const double diff = static_cast<double>(i0) / n0 - static_cast<double>(i1) / n1;
    sup = std::max(sup, diff < 0 ? -diff : diff);
  }
  return sup;
}

}  // namespace netperm

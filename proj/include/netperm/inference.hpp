#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "netperm/common.hpp"
#include "netperm/randomize.hpp"

namespace netperm {

/// P-value surface over a (delta0, tau0) grid, row-major in delta.
struct PvalueGrid {
  std::vector<double> delta_values;
  std::vector<double> tau_values;
  std::vector<TestResult> results;      // flattened, index = i_delta * n_tau + i_tau
  std::vector<std::uint8_t> failed;     // per-point engine failure
  std::vector<std::string> errors;      // message for each failed point, "" otherwise
  double alpha = 0.05;
  StatKind stat_kind = StatKind::Logr;
  std::uint64_t draws = 0;
  std::uint64_t seed = 0;

  std::size_t n_delta() const { return delta_values.size(); }
  std::size_t n_tau() const { return tau_values.size(); }
  std::size_t index(std::size_t i_delta, std::size_t i_tau) const { return i_delta * n_tau() + i_tau; }

  double pvalue(std::size_t i_delta, std::size_t i_tau) const {
    const std::size_t k = index(i_delta, i_tau);
    return failed[k] ? std::numeric_limits<double>::quiet_NaN() : results[k].pvalue;
  }

  bool in_confidence_set(std::size_t i_delta, std::size_t i_tau) const {
    const std::size_t k = index(i_delta, i_tau);
    return !failed[k] && results[k].pvalue >= alpha;
  }

  bool set_empty() const {
    for (std::size_t i = 0; i < n_delta(); ++i)
      for (std::size_t j = 0; j < n_tau(); ++j)
        if (in_confidence_set(i, j)) return false;
    return true;
  }

  std::uint64_t failed_points() const {
    std::uint64_t c = 0;
    for (auto f : failed) c += f ? 1 : 0;
    return c;
  }
};

/// Run the censoring-aware test at every grid point. Point seeds derive
/// from (seed, flat index) so any single point is re-runnable standalone and
/// the surface is independent of evaluation order. Per-point failures are
/// recorded in the grid, not thrown.
inline PvalueGrid invert(const ObservedData& data, const InterferenceMatrix& a, const CausalModelSpec& model,
                         StatKind kind, std::vector<double> delta_values, std::vector<double> tau_values,
                         std::uint64_t draws, double alpha, std::uint64_t seed, int threads = 0) {
  if (delta_values.empty() || tau_values.empty()) throw data_error("invert: grid axes must be nonempty");
  if (!(alpha > 0.0 && alpha < 1.0)) throw data_error("invert: alpha must be in (0,1)");
  PvalueGrid grid;
  grid.delta_values = std::move(delta_values);
  grid.tau_values = std::move(tau_values);
  grid.alpha = alpha;
  grid.stat_kind = kind;
  grid.draws = draws;
  grid.seed = seed;
  const std::size_t total = grid.n_delta() * grid.n_tau();
  grid.results.resize(total);
  grid.failed.assign(total, 0);
  grid.errors.assign(total, "");
  for (std::size_t i = 0; i < grid.n_delta(); ++i) {
    for (std::size_t j = 0; j < grid.n_tau(); ++j) {
      const std::size_t k = grid.index(i, j);
      const Theta theta0{grid.delta_values[i], grid.tau_values[j]};
      const std::uint64_t point_seed = derive_key({seed, static_cast<std::uint64_t>(k)});
      try {
        grid.results[k] = test_ipz(data, a, model, theta0, kind, draws, point_seed, false, threads);
      } catch (const std::exception& e) {
        grid.failed[k] = 1;
        grid.errors[k] = e.what();
      }
    }
  }
  return grid;
}

struct PointEstimate {
  Theta theta{};
  double max_pvalue = 0.0;
  bool tied = false;
  bool valid = false;  // false when every point failed
};

/// Argmax of the p-value surface; ties broken toward smaller delta0 then
/// smaller tau0, with the tie reported.
inline PointEstimate point_estimate(const PvalueGrid& grid) {
  PointEstimate best;
  for (std::size_t i = 0; i < grid.n_delta(); ++i) {
    for (std::size_t j = 0; j < grid.n_tau(); ++j) {
      if (grid.failed[grid.index(i, j)]) continue;
      const double pv = grid.results[grid.index(i, j)].pvalue;
      if (!best.valid || pv > best.max_pvalue) {
        best.valid = true;
        best.max_pvalue = pv;
        best.theta = Theta{grid.delta_values[i], grid.tau_values[j]};
        best.tied = false;
      } else if (pv == best.max_pvalue) {
        best.tied = true;
      }
    }
  }
  return best;
}

struct MarginalSet {
  std::vector<double> values;  // axis values with some slice point in the set
  double lo = 0.0, hi = 0.0;   // hull interval endpoints
  bool empty = true;
};

enum class Axis { Delta, Tau };

/// Project the confidence set onto one axis: a value is included when any
/// grid point on its slice has pvalue >= alpha.
inline MarginalSet marginal_interval(const PvalueGrid& grid, Axis axis, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw data_error("marginal_interval: alpha must be in (0,1)");
  MarginalSet out;
  const bool on_delta = axis == Axis::Delta;
  const std::size_t outer = on_delta ? grid.n_delta() : grid.n_tau();
  const std::size_t inner = on_delta ? grid.n_tau() : grid.n_delta();
  for (std::size_t i = 0; i < outer; ++i) {
    bool hit = false;
    for (std::size_t j = 0; j < inner && !hit; ++j) {
      const std::size_t k = on_delta ? grid.index(i, j) : grid.index(j, i);
      if (!grid.failed[k] && grid.results[k].pvalue >= alpha) hit = true;
    }
    if (hit) out.values.push_back(on_delta ? grid.delta_values[i] : grid.tau_values[i]);
  }
  if (!out.values.empty()) {
    out.empty = false;
    out.lo = out.values.front();
    out.hi = out.values.back();
  }
  return out;
}

struct AddInterpretation {
  double individual_ratio = 1.0;       // exp(delta): own-treatment survival-time ratio
  double spillover_ratio = 1.0;        // exp(tau): all-vs-no-neighbors-treated ratio
  double blanket_ratio = 1.0;          // exp(delta + tau): uniformity vs full coverage
};

inline AddInterpretation interpret_add(Theta theta) {
  AddInterpretation r;
  r.individual_ratio = std::exp(theta.delta);
  r.spillover_ratio = std::exp(theta.tau);
  r.blanket_ratio = std::exp(theta.delta + theta.tau);
  return r;
}

}  // namespace netperm

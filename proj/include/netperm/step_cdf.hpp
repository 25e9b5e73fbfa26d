#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "netperm/common.hpp"

namespace netperm {

/// Right-continuous step CDF: value is 0 before the first jump and
/// values[k] at and after jump_times[k]. terminal_value may be below 1 when
/// the largest observation is censored (defective distribution).
struct StepCdf {
  std::vector<double> jump_times;  // strictly increasing, positive
  std::vector<double> values;      // strictly increasing, last == terminal_value
  double terminal_value = 0.0;

  double value_at(double t) const {
    const auto it = std::upper_bound(jump_times.begin(), jump_times.end(), t);
    if (it == jump_times.begin()) return 0.0;
    return values[static_cast<std::size_t>(it - jump_times.begin()) - 1];
  }

  /// Generalized inverse: smallest jump time whose CDF value is >= u.
  double inverse(double u) const {
    const auto it = std::lower_bound(values.begin(), values.end(), u);
    if (it == values.end())
      throw numeric_error("step cdf inverse: u exceeds terminal value");
    return jump_times[static_cast<std::size_t>(it - values.begin())];
  }
};

/// Draw from the distribution conditioned on exceeding `lower`, capped at
/// `cap`: u' = F(lower) + u (1 - F(lower)); if u' <= F(cap) return the
/// generalized inverse at u', else cap. All mass at or below lower (or an
/// empty distribution) also yields cap.
inline double sample_truncated(const StepCdf& cdf, double lower, double cap, double u) {
  const double f_lower = cdf.value_at(lower);
  if (f_lower >= 1.0) return cap;
  const double u2 = f_lower + u * (1.0 - f_lower);
  if (u2 > cdf.value_at(cap)) return cap;
  auto idx = static_cast<std::size_t>(
      std::lower_bound(cdf.values.begin(), cdf.values.end(), u2) - cdf.values.begin());
  // guard against rounding pulling the inverse at or below lower
  const auto first_above = static_cast<std::size_t>(
      std::upper_bound(cdf.jump_times.begin(), cdf.jump_times.end(), lower) - cdf.jump_times.begin());
  if (idx < first_above) idx = first_above;
  if (idx >= cdf.jump_times.size() || cdf.jump_times[idx] > cap) return cap;
  return cdf.jump_times[idx];
}

}  // namespace netperm

#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "netperm/common.hpp"
#include "netperm/rng.hpp"

namespace netperm {

/// Sparse representation of the interference structure: rows[i] holds the
/// sorted ids of the individuals who may interfere with i. The matrix is
/// directed in general; generators that promise symmetry produce it.
struct InterferenceMatrix {
  std::vector<std::vector<std::int32_t>> rows;
  std::vector<std::int32_t> row_sums;

  std::size_t n() const { return rows.size(); }

  /// Check the structural invariants: zero diagonal, in-range strictly
  /// increasing neighbor ids, row_sums consistent with rows.
  void validate() const {
    const auto count = static_cast<std::int32_t>(rows.size());
    if (row_sums.size() != rows.size())
      throw data_error("interference matrix: row_sums size mismatch");
    for (std::int32_t i = 0; i < count; ++i) {
      const auto& row = rows[static_cast<std::size_t>(i)];
      if (row_sums[static_cast<std::size_t>(i)] != static_cast<std::int32_t>(row.size()))
        throw data_error("interference matrix: row_sums[" + std::to_string(i) + "] inconsistent");
      std::int32_t prev = -1;
      for (std::int32_t j : row) {
        if (j < 0 || j >= count)
          throw data_error("interference matrix: index " + std::to_string(j) + " out of range in row " + std::to_string(i));
        if (j == i)
          throw data_error("interference matrix: self-edge at " + std::to_string(i));
        if (j <= prev)
          throw data_error("interference matrix: row " + std::to_string(i) + " not strictly increasing");
        prev = j;
      }
    }
  }
};

/// Treated-neighbor exposures for one assignment: counts T_i, proportions
/// G_i = T_i / A_i (0 when A_i = 0), and optionally G*_i = T_i / B_i when a
/// participation denominator B is supplied.
struct Exposures {
  std::vector<std::int32_t> treated_count;
  std::vector<double> proportion;
  std::vector<double> proportion_b;  // empty unless B supplied
  bool has_b = false;
};

inline InterferenceMatrix build_from_edges(std::span<const std::pair<std::int32_t, std::int32_t>> edges,
                                           std::size_t n, bool symmetric) {
  InterferenceMatrix a;
  a.rows.resize(n);
  for (const auto& [i, j] : edges) {
    if (i < 0 || j < 0 || static_cast<std::size_t>(i) >= n || static_cast<std::size_t>(j) >= n)
      throw data_error("edge (" + std::to_string(i) + "," + std::to_string(j) + ") out of range for n=" + std::to_string(n));
    if (i == j)
      throw data_error("self-edge (" + std::to_string(i) + "," + std::to_string(j) + ") not allowed");
    a.rows[static_cast<std::size_t>(i)].push_back(j);
    if (symmetric) a.rows[static_cast<std::size_t>(j)].push_back(i);
  }
  a.row_sums.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& row = a.rows[i];
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
    a.row_sums[i] = static_cast<std::int32_t>(row.size());
  }
  return a;
}

/// T_i = sum of z over i's neighbors; G_i and G*_i per the invariants.
inline Exposures compute_exposures(const InterferenceMatrix& a, std::span<const std::uint8_t> z,
                                   std::span<const double> b = {}) {
  const std::size_t n = a.n();
  if (z.size() != n) throw data_error("treatment vector length does not match interference matrix");
  Exposures e;
  e.treated_count.resize(n);
  e.proportion.resize(n);
  e.has_b = !b.empty();
  if (e.has_b) {
    if (b.size() != n) throw data_error("denominator vector length does not match interference matrix");
    e.proportion_b.resize(n);
  }
  for (std::size_t i = 0; i < n; ++i) {
    std::int32_t t = 0;
    for (std::int32_t j : a.rows[i]) t += z[static_cast<std::size_t>(j)];
    e.treated_count[i] = t;
    e.proportion[i] = a.row_sums[i] > 0 ? static_cast<double>(t) / a.row_sums[i] : 0.0;
    if (e.has_b) {
      if (b[i] < a.row_sums[i])
        throw data_error("denominator B[" + std::to_string(i) + "]=" + std::to_string(b[i]) +
                         " smaller than interference set size " + std::to_string(a.row_sums[i]));
      e.proportion_b[i] = b[i] > 0 ? static_cast<double>(t) / b[i] : 0.0;
    }
  }
  return e;
}

/// Draw each interference set size from Poisson(mean) truncated at n-1 and
/// fill the row with distinct neighbors sampled without replacement. The
/// result is asymmetric in general.
inline InterferenceMatrix gen_poisson_neighbors(std::size_t n, double mean, Rng& rng) {
  if (n < 2) throw data_error("gen_poisson_neighbors: n must be at least 2");
  if (!(mean > 0)) throw data_error("gen_poisson_neighbors: mean must be positive");
  InterferenceMatrix a;
  a.rows.resize(n);
  a.row_sums.resize(n);
  const auto count = static_cast<std::int32_t>(n);
  std::vector<std::int32_t> pool;
  for (std::size_t i = 0; i < n; ++i) {
    long size = rng.poisson(mean);
    if (size > count - 1) size = count - 1;
    auto& row = a.rows[i];
    if (size > (count - 1) / 2) {
      // dense row: partial Fisher-Yates over all candidates
      pool.clear();
      for (std::int32_t j = 0; j < count; ++j)
        if (j != static_cast<std::int32_t>(i)) pool.push_back(j);
      for (long k = 0; k < size; ++k) {
        std::size_t pick = static_cast<std::size_t>(k) + rng.below(pool.size() - static_cast<std::size_t>(k));
        std::swap(pool[static_cast<std::size_t>(k)], pool[pick]);
      }
      row.assign(pool.begin(), pool.begin() + size);
    } else {
      // sparse row: rejection sampling, collisions are rare
      std::unordered_set<std::int32_t> seen;
      seen.reserve(static_cast<std::size_t>(size) * 2);
      while (static_cast<long>(row.size()) < size) {
        auto j = static_cast<std::int32_t>(rng.below(n));
        if (j == static_cast<std::int32_t>(i) || !seen.insert(j).second) continue;
        row.push_back(j);
      }
    }
    std::sort(row.begin(), row.end());
    a.row_sums[i] = static_cast<std::int32_t>(row.size());
  }
  return a;
}

/// Linear preferential attachment: nodes join one at a time; node j forms
/// min(j, m_edges) edges to distinct existing nodes, picked with probability
/// proportional to current degree + 1. Symmetric by construction.
inline InterferenceMatrix gen_preferential_attachment(std::size_t n, std::size_t m_edges, Rng& rng) {
  if (n < 2) throw data_error("gen_preferential_attachment: n must be at least 2");
  if (m_edges < 1 || m_edges >= n) throw data_error("gen_preferential_attachment: need 1 <= m_edges < n");
  InterferenceMatrix a;
  a.rows.resize(n);
  // urn holds one copy of each node per unit of (degree + 1)
  std::vector<std::int32_t> urn;
  urn.reserve(2 * n * m_edges + n);
  urn.push_back(0);
  std::vector<std::int32_t> targets;
  for (std::size_t j = 1; j < n; ++j) {
    const std::size_t want = std::min(j, m_edges);
    targets.clear();
    if (want == j) {
      for (std::size_t i = 0; i < j; ++i) targets.push_back(static_cast<std::int32_t>(i));
    } else {
      while (targets.size() < want) {
        std::int32_t pick = urn[rng.below(urn.size())];
        if (std::find(targets.begin(), targets.end(), pick) == targets.end())
          targets.push_back(pick);
      }
    }
    for (std::int32_t t : targets) {
      a.rows[j].push_back(t);
      a.rows[static_cast<std::size_t>(t)].push_back(static_cast<std::int32_t>(j));
      urn.push_back(t);
      urn.push_back(static_cast<std::int32_t>(j));
    }
    urn.push_back(static_cast<std::int32_t>(j));  // the +1 smoothing copy
  }
  a.row_sums.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::sort(a.rows[i].begin(), a.rows[i].end());
    a.row_sums[i] = static_cast<std::int32_t>(a.rows[i].size());
  }
  return a;
}

/// Union with the transpose: A_ij = A_ji = 1 whenever either direction held.
inline InterferenceMatrix symmetrized(const InterferenceMatrix& a) {
  InterferenceMatrix s;
  const std::size_t n = a.n();
  s.rows.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::int32_t j : a.rows[i]) {
      s.rows[i].push_back(j);
      s.rows[static_cast<std::size_t>(j)].push_back(static_cast<std::int32_t>(i));
    }
  s.row_sums.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& row = s.rows[i];
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
    s.row_sums[i] = static_cast<std::int32_t>(row.size());
  }
  return s;
}

struct DegreeSummary {
  double min = 0, mean = 0, q25 = 0, q75 = 0, max = 0;
  std::size_t n = 0;
};

/// Row-sum summary (min/mean/IQR/max); quantiles by linear interpolation.
inline DegreeSummary degree_summary(const InterferenceMatrix& a) {
  DegreeSummary s;
  s.n = a.n();
  if (s.n == 0) return s;
  std::vector<std::int32_t> deg = a.row_sums;
  std::sort(deg.begin(), deg.end());
  auto quantile = [&](double p) {
    const double h = p * (static_cast<double>(deg.size()) - 1);
    const auto lo = static_cast<std::size_t>(h);
    const std::size_t hi = std::min(lo + 1, deg.size() - 1);
    return deg[lo] + (h - static_cast<double>(lo)) * (deg[hi] - deg[lo]);
  };
  double sum = 0;
  for (auto d : deg) sum += d;
  s.min = deg.front();
  s.max = deg.back();
  s.mean = sum / static_cast<double>(deg.size());
  s.q25 = quantile(0.25);
  s.q75 = quantile(0.75);
  return s;
}

}  // namespace netperm

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "netperm/common.hpp"
#include "netperm/interference.hpp"

namespace netperm {

/// Effect parameters on the log-time scale: delta is the individual (direct)
/// effect, tau the spillover effect.
struct Theta {
  double delta = 0.0;
  double tau = 0.0;
};

enum class ModelKind { Add, Bfp };

/// Which exposure statistic feeds the model: treated-neighbor count T,
/// treated proportion G, or the participation-denominator proportion G*.
enum class ExposureMode { Count, Proportion, ProportionB };

struct CausalModelSpec {
  ModelKind kind = ModelKind::Add;
  ExposureMode exposure_mode = ExposureMode::Proportion;
};

/// Accepts "add-G", "add-Gstar", "add-T", "bfp-T", "bfp-G" (and the bare
/// kinds with their default exposures: add -> G, bfp -> T).
inline CausalModelSpec parse_model(const std::string& text) {
  CausalModelSpec spec;
  std::string kind = text, exposure;
  if (auto dash = text.find('-'); dash != std::string::npos) {
    kind = text.substr(0, dash);
    exposure = text.substr(dash + 1);
  }
  if (kind == "add") {
    spec.kind = ModelKind::Add;
    spec.exposure_mode = ExposureMode::Proportion;
  } else if (kind == "bfp") {
    spec.kind = ModelKind::Bfp;
    spec.exposure_mode = ExposureMode::Count;
  } else {
    throw data_error("unknown model '" + text + "' (expected add-G, add-Gstar, add-T, bfp-T, or bfp-G)");
  }
  if (!exposure.empty()) {
    if (exposure == "G") spec.exposure_mode = ExposureMode::Proportion;
    else if (exposure == "Gstar") spec.exposure_mode = ExposureMode::ProportionB;
    else if (exposure == "T") spec.exposure_mode = ExposureMode::Count;
    else throw data_error("unknown exposure '" + exposure + "' in model '" + text + "' (expected G, Gstar, or T)");
  }
  return spec;
}

inline std::string model_string(const CausalModelSpec& spec) {
  std::string s = spec.kind == ModelKind::Add ? "add" : "bfp";
  switch (spec.exposure_mode) {
    case ExposureMode::Count: return s + "-T";
    case ExposureMode::Proportion: return s + "-G";
    case ExposureMode::ProportionB: return s + "-Gstar";
  }
  return s;
}

/// Pull the exposure values the model consumes out of an Exposures record.
inline std::vector<double> select_exposures(const Exposures& e, ExposureMode mode) {
  switch (mode) {
    case ExposureMode::Count: {
      std::vector<double> out(e.treated_count.begin(), e.treated_count.end());
      return out;
    }
    case ExposureMode::Proportion:
      return e.proportion;
    case ExposureMode::ProportionB:
      if (!e.has_b) throw data_error("model uses G* but no participation denominators were supplied");
      return e.proportion_b;
  }
  throw data_error("unreachable exposure mode");
}

/// Log-scale shift F(z; theta) applied to individual i's uniformity outcome.
/// ADD: delta*z + tau*e. BFP: delta + log(1 + (1-z)(exp(-delta)-1)exp(-tau^2 e)),
/// which collapses to delta for treated individuals and to 0 when z=0, e=0.
inline double shift(const CausalModelSpec& model, Theta theta, int z_i, double exposure_i) {
  if (model.kind == ModelKind::Add) return theta.delta * z_i + theta.tau * exposure_i;
  if (z_i != 0) return theta.delta;
  const double arg = std::expm1(-theta.delta) * std::exp(-theta.tau * theta.tau * exposure_i);
  if (!(arg > -1.0))
    throw numeric_error("bfp shift: log argument underflowed to a nonpositive value");
  return theta.delta + std::log1p(arg);
}

/// Shift vector for a whole assignment, computing exposures from (A, z).
inline std::vector<double> shift_vector(const CausalModelSpec& model, Theta theta,
                                        const InterferenceMatrix& a, std::span<const std::uint8_t> z,
                                        std::span<const double> b = {}) {
  const Exposures e = compute_exposures(a, z, b);
  const std::vector<double> exposure = select_exposures(e, model.exposure_mode);
  std::vector<double> s(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) s[i] = shift(model, theta, z[i], exposure[i]);
  return s;
}

/// Invert the observed trial to the uniformity trial: y_i(0) = Y_i exp(-F_i).
inline std::vector<double> to_uniformity(std::span<const double> y, std::span<const std::uint8_t> z,
                                         const InterferenceMatrix& a, const CausalModelSpec& model,
                                         Theta theta0, std::span<const double> b = {}) {
  const std::vector<double> s = shift_vector(model, theta0, a, z, b);
  std::vector<double> y0(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!(y[i] > 0)) throw data_error("outcome times must be positive (index " + std::to_string(i) + ")");
    y0[i] = y[i] * std::exp(-s[i]);
  }
  return y0;
}

/// Map uniformity outcomes forward to potential outcomes under assignment z.
inline std::vector<double> from_uniformity(std::span<const double> y0, std::span<const std::uint8_t> z,
                                           const InterferenceMatrix& a, const CausalModelSpec& model,
                                           Theta theta0, std::span<const double> b = {}) {
  const std::vector<double> s = shift_vector(model, theta0, a, z, b);
  std::vector<double> y(y0.size());
  for (std::size_t i = 0; i < y0.size(); ++i) {
    if (!(y0[i] > 0)) throw data_error("uniformity times must be positive (index " + std::to_string(i) + ")");
    y[i] = y0[i] * std::exp(s[i]);
  }
  return y;
}

}  // namespace netperm

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "netperm/common.hpp"

namespace netperm {

inline constexpr double half_log_two_pi = 0.91893853320467274178;

inline double norm_log_pdf(double e) { return -0.5 * e * e - half_log_two_pi; }

/// log of the standard normal survival function 1 - Phi(e), stable across
/// the whole range: erfc directly below 20, asymptotic expansion above.
inline double norm_log_sf(double e) {
  if (e < 20.0) return std::log(0.5 * std::erfc(e * 0.7071067811865475244));
  const double inv2 = 1.0 / (e * e);
  const double series = inv2 * (-1.0 + inv2 * (3.0 + inv2 * (-15.0 + inv2 * 105.0)));
  return -0.5 * e * e - std::log(e) - half_log_two_pi + std::log1p(series);
}

/// Inverse Mills ratio phi(e) / (1 - Phi(e)).
inline double norm_hazard(double e) { return std::exp(norm_log_pdf(e) - norm_log_sf(e)); }

/// Censored log-normal AFT log-likelihood:
///   sum_i D_i log(phi(eps_i)/(sigma y_i)) + (1 - D_i) log(1 - Phi(eps_i)),
/// eps_i = (log y_i - q_i beta) / sigma.
inline double aft_loglik(std::span<const double> y, std::span<const std::uint8_t> d, const Matrix& design,
                         std::span<const double> beta, double sigma) {
  if (y.size() != d.size() || y.size() != design.nrow()) throw data_error("aft_loglik: length mismatch");
  if (design.ncol() != beta.size()) throw data_error("aft_loglik: beta length mismatch");
  if (!(sigma > 0)) throw data_error("aft_loglik: sigma must be positive");
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!(y[i] > 0)) throw data_error("aft_loglik: times must be positive");
    double mu = 0.0;
    for (std::size_t j = 0; j < beta.size(); ++j) mu += design(i, j) * beta[j];
    const double x = std::log(y[i]);
    const double eps = (x - mu) / sigma;
    total += d[i] ? norm_log_pdf(eps) - std::log(sigma) - x : norm_log_sf(eps);
  }
  return total;
}

struct AftFit {
  std::vector<double> beta;
  double sigma = 1.0;
  double loglik = -std::numeric_limits<double>::infinity();
  bool converged = false;
  bool ridged = false;
  int iterations = 0;
};

namespace detail {

/// In-place Cholesky solve of the p x p SPD system m s = rhs (row-major m,
/// lower triangle used). Returns false when the factorization breaks down.
inline bool cholesky_solve(std::vector<double> m, std::size_t p, std::span<double> rhs) {
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = m[i * p + j];
      for (std::size_t k = 0; k < j; ++k) s -= m[i * p + k] * m[j * p + k];
      if (i == j) {
        if (!(s > 0)) return false;
        m[i * p + i] = std::sqrt(s);
      } else {
        m[i * p + j] = s / m[j * p + j];
      }
    }
  }
  for (std::size_t i = 0; i < p; ++i) {
    double s = rhs[i];
    for (std::size_t k = 0; k < i; ++k) s -= m[i * p + k] * rhs[k];
    rhs[i] = s / m[i * p + i];
  }
  for (std::size_t ii = p; ii-- > 0;) {
    double s = rhs[ii];
    for (std::size_t k = ii + 1; k < p; ++k) s -= m[k * p + ii] * rhs[k];
    rhs[ii] = s / m[ii * p + ii];
  }
  return true;
}

/// Log-likelihood, gradient, and negated Hessian of the censored normal
/// model in the concave parametrization p = (a, b) = (beta/sigma, 1/sigma),
/// where eps_i = b x_i - q_i a. x = log y precomputed by the caller.
struct ConcaveEval {
  double loglik;
  std::vector<double> grad;
  std::vector<double> neg_hess;  // (k+1) x (k+1) row-major
};

inline ConcaveEval eval_concave(std::span<const double> x, std::span<const std::uint8_t> d,
                                const Matrix& design, std::span<const double> p) {
  const std::size_t k = design.ncol();
  const std::size_t dim = k + 1;
  const double b = p[k];
  ConcaveEval out;
  out.grad.assign(dim, 0.0);
  out.neg_hess.assign(dim * dim, 0.0);
  if (!(b > 0)) {
    out.loglik = -std::numeric_limits<double>::infinity();
    return out;
  }
  double total = 0.0;
  std::vector<double> v(dim);
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = 0; j < k; ++j) v[j] = -design(i, j);
    v[k] = x[i];
    double eps = 0.0;
    for (std::size_t j = 0; j < dim; ++j) eps += v[j] * p[j];
    double w_grad, w_hess;  // contribution is w_grad * v and -w_hess * v v^T
    if (d[i]) {
      total += -0.5 * eps * eps - half_log_two_pi + std::log(b) - x[i];
      w_grad = -eps;
      w_hess = 1.0;
      out.grad[k] += 1.0 / b;
      out.neg_hess[k * dim + k] += 1.0 / (b * b);
    } else {
      total += norm_log_sf(eps);
      const double lam = norm_hazard(eps);
      w_grad = -lam;
      w_hess = lam * (lam - eps);
      if (w_hess < 0) w_hess = 0;  // exact value is nonnegative; clip rounding
    }
    for (std::size_t j = 0; j < dim; ++j) {
      out.grad[j] += w_grad * v[j];
      for (std::size_t l = 0; l <= j; ++l) out.neg_hess[j * dim + l] += w_hess * v[j] * v[l];
    }
  }
  for (std::size_t j = 0; j < dim; ++j)
    for (std::size_t l = j + 1; l < dim; ++l) out.neg_hess[j * dim + l] = out.neg_hess[l * dim + j];
  out.loglik = total;
  return out;
}

}  // namespace detail

/// Maximize the censored log-normal AFT likelihood by damped Newton in the
/// concave parametrization (beta/sigma, 1/sigma). Convergence is judged on
/// the gradient in the reported (beta, log sigma) coordinates, max-norm
/// below 1e-8, within 200 iterations. Initialization: least squares on the
/// event-only rows, sigma from their residual SD floored at 1e-3. A failed
/// Hessian solve falls back to a 1e-10 ridge (flagged). Non-convergence is
/// reported, not thrown; the best achieved point is returned.
inline AftFit aft_mle(std::span<const double> y, std::span<const std::uint8_t> d, const Matrix& design) {
  const std::size_t n = y.size();
  const std::size_t k = design.ncol();
  if (d.size() != n || design.nrow() != n) throw data_error("aft_mle: length mismatch");
  std::size_t events = 0;
  for (auto e : d) events += e ? 1 : 0;
  if (events == 0) throw data_error("aft_mle: at least one event is required");

  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(y[i] > 0)) throw data_error("aft_mle: times must be positive");
    x[i] = std::log(y[i]);
  }

  // event-only least squares for the starting point
  std::vector<double> xtx(k * k, 0.0), xty(k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!d[i]) continue;
    for (std::size_t j = 0; j < k; ++j) {
      xty[j] += design(i, j) * x[i];
      for (std::size_t l = 0; l <= j; ++l) xtx[j * k + l] += design(i, j) * design(i, l);
    }
  }
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t l = j + 1; l < k; ++l) xtx[j * k + l] = xtx[l * k + j];
  std::vector<double> beta0 = xty;
  if (!detail::cholesky_solve(xtx, k, beta0)) {
    for (std::size_t j = 0; j < k; ++j) xtx[j * k + j] += 1e-8;
    beta0 = xty;
    if (!detail::cholesky_solve(xtx, k, beta0)) beta0.assign(k, 0.0);
  }
  double ssr = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!d[i]) continue;
    double mu = 0.0;
    for (std::size_t j = 0; j < k; ++j) mu += design(i, j) * beta0[j];
    ssr += (x[i] - mu) * (x[i] - mu);
  }
  double sigma0 = std::sqrt(ssr / static_cast<double>(events));
  if (!(sigma0 > 1e-3)) sigma0 = 1e-3;

  const std::size_t dim = k + 1;
  std::vector<double> p(dim);
  for (std::size_t j = 0; j < k; ++j) p[j] = beta0[j] / sigma0;
  p[k] = 1.0 / sigma0;

  AftFit fit;
  fit.beta.resize(k);
  auto cur = detail::eval_concave(x, d, design, p);
  std::vector<double> grad_orig(dim);
  for (int iter = 0; iter < 200; ++iter) {
    fit.iterations = iter;
    // gradient in (beta, log sigma) coordinates for the convergence test
    const double b = p[k];
    double gs = -b * cur.grad[k];
    for (std::size_t j = 0; j < k; ++j) {
      grad_orig[j] = b * cur.grad[j];
      gs -= p[j] * cur.grad[j];
    }
    grad_orig[k] = gs;
    double gmax = 0.0;
    for (double g : grad_orig) gmax = std::max(gmax, std::abs(g));
    if (gmax < 1e-8) {
      fit.converged = true;
      break;
    }

    std::vector<double> step(cur.grad.begin(), cur.grad.end());
    if (!detail::cholesky_solve(cur.neg_hess, dim, step)) {
      std::vector<double> ridged = cur.neg_hess;
      for (std::size_t j = 0; j < dim; ++j) ridged[j * dim + j] += 1e-10;
      step.assign(cur.grad.begin(), cur.grad.end());
      if (!detail::cholesky_solve(std::move(ridged), dim, step)) break;
      fit.ridged = true;
    }

    double alpha = 1.0;
    std::vector<double> trial(dim);
    bool improved = false;
    for (int h = 0; h < 60; ++h) {
      for (std::size_t j = 0; j < dim; ++j) trial[j] = p[j] + alpha * step[j];
      auto next = detail::eval_concave(x, d, design, trial);
      if (next.loglik > cur.loglik) {
        p = trial;
        cur = std::move(next);
        improved = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!improved) break;  // at numerical optimum; convergence flag decides
  }

  fit.sigma = 1.0 / p[k];
  for (std::size_t j = 0; j < k; ++j) fit.beta[j] = p[j] * fit.sigma;
  fit.loglik = cur.loglik;
  return fit;
}

/// Full-model AFT fit: maximized log-likelihood over the design
/// (1, Z_i, E_i, Z_i E_i, A_i) with E the chosen exposure and A_i the
/// interference set size. The test statistic is this maximum minus the
/// intercept-only maximum (aft_intercept_only), which cancels the
/// dataset-level likelihood scale; larger = more extreme.
inline AftFit lraft_fit(std::span<const double> y0, std::span<const std::uint8_t> d,
                        std::span<const std::uint8_t> z, std::span<const double> exposure,
                        std::span<const std::int32_t> row_sums) {
  const std::size_t n = y0.size();
  if (d.size() != n || z.size() != n || exposure.size() != n || row_sums.size() != n)
    throw data_error("lraft: length mismatch");
  Matrix design(n, 5);
  for (std::size_t i = 0; i < n; ++i) {
    design(i, 0) = 1.0;
    design(i, 1) = z[i];
    design(i, 2) = exposure[i];
    design(i, 3) = z[i] * exposure[i];
    design(i, 4) = row_sums[i];
  }
  return aft_mle(y0, d, design);
}

inline AftFit aft_intercept_only(std::span<const double> y0, std::span<const std::uint8_t> d) {
  Matrix design(y0.size(), 1);
  for (std::size_t i = 0; i < y0.size(); ++i) design(i, 0) = 1.0;
  return aft_mle(y0, d, design);
}

}  // namespace netperm

#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

namespace sltc {

struct BfgsResult {
  std::vector<double> x;
  double f;
  std::vector<double> grad;
  int iterations;
  bool converged;  // gradient infinity norm reached the tolerance
};

/// Minimizes f with analytic gradient: fg(x, grad_out) -> f(x). Dense inverse
/// Hessian BFGS with Armijo backtracking; curvature pairs that fail the
/// positivity guard are skipped so the approximation stays positive definite.
inline BfgsResult bfgs_minimize(
    const std::function<double(const std::vector<double>&, std::vector<double>&)>& fg,
    std::vector<double> x0, double grad_tol, int max_iter) {
  const std::size_t n = x0.size();
  auto inf_norm = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double a : v) m = std::max(m, std::fabs(a));
    return m;
  };

  BfgsResult res;
  res.x = std::move(x0);
  res.grad.assign(n, 0.0);
  res.f = fg(res.x, res.grad);
  res.iterations = 0;
  res.converged = inf_norm(res.grad) <= grad_tol;
  if (res.converged || max_iter <= 0) return res;

  std::vector<double> h(n * n, 0.0);  // inverse Hessian approximation
  for (std::size_t i = 0; i < n; ++i) h[i * n + i] = 1.0;
  bool scaled = false;

  std::vector<double> d(n), x_new(n), g_new(n), s(n), y(n), hy(n);
  for (int it = 0; it < max_iter; ++it) {
    res.iterations = it + 1;
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += h[i * n + j] * res.grad[j];
      d[i] = -acc;
    }
    double slope = 0.0;
    for (std::size_t i = 0; i < n; ++i) slope += d[i] * res.grad[i];
    if (!(slope < 0.0)) {
      // Numerical breakdown; fall back to steepest descent.
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) h[i * n + j] = i == j ? 1.0 : 0.0;
        d[i] = -res.grad[i];
      }
      slope = 0.0;
      for (std::size_t i = 0; i < n; ++i) slope += d[i] * res.grad[i];
      if (!(slope < 0.0)) break;
    }

    double step = 1.0;
    double f_new = res.f;
    bool accepted = false;
    for (int bt = 0; bt < 60; ++bt) {
      for (std::size_t i = 0; i < n; ++i) x_new[i] = res.x[i] + step * d[i];
      f_new = fg(x_new, g_new);
      if (std::isfinite(f_new) && f_new <= res.f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;

    double sy = 0.0, yy = 0.0, sn = 0.0, yn = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = x_new[i] - res.x[i];
      y[i] = g_new[i] - res.grad[i];
      sy += s[i] * y[i];
      yy += y[i] * y[i];
      sn += s[i] * s[i];
      yn += y[i] * y[i];
    }
    res.x = x_new;
    res.f = f_new;
    res.grad = g_new;
    if (inf_norm(res.grad) <= grad_tol) {
      res.converged = true;
      return res;
    }

    if (sy > 1e-12 * std::sqrt(sn) * std::sqrt(yn) && yy > 0.0) {
      if (!scaled) {
        const double gamma = sy / yy;
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < n; ++j) h[i * n + j] = i == j ? gamma : 0.0;
        scaled = true;
      }
      const double rho = 1.0 / sy;
      for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += h[i * n + j] * y[j];
        hy[i] = acc;
      }
      double yhy = 0.0;
      for (std::size_t i = 0; i < n; ++i) yhy += y[i] * hy[i];
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          h[i * n + j] += rho * ((1.0 + rho * yhy) * s[i] * s[j] - hy[i] * s[j] - s[i] * hy[j]);
        }
      }
    }
  }
  res.converged = inf_norm(res.grad) <= grad_tol;
  return res;
}

}  // namespace sltc

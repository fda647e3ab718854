#pragma once

// Independent reference implementations used only by the tests.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace oracle {

// V(r) = -(k sinh r + log cosh r) / 2, formed directly.
inline double naive_potential(double r, double k) {
  return -0.5 * (k * std::sinh(r) + std::log(std::cosh(r)));
}

// Mean exit time t(r) on a uniform grid through r. The inner integral
// I(x) = int_{-inf}^x exp(2 (V(x) - V(y))) dy is carried from node to node,
// I(x + h) = exp(2 (V(x + h) - V(x))) I(x) + cell, with each cell integrated
// exactly for a log-linear integrand; the outer integral is a trapezoid sum.
// The grid starts where exp(-2 V) is e^-40 below its value at the well
// bottom and runs past the barrier until I(x) is negligible.
inline double brute_exit_time(double r, double beta, double lambda, double h = 0.001) {
  const double k = lambda * beta / 4.0;
  // Extremes of V from sign changes of a sampled slope, no root finder.
  double a = 0.0, b = 0.0;
  bool found_a = false;
  double prev = naive_potential(-40.0, k);
  bool prev_up = false;
  for (double x = -40.0 + 1e-3; x <= 40.0; x += 1e-3) {
    const double v = naive_potential(x, k);
    const bool up = v > prev;
    if (!found_a && up && !prev_up && x > -39.0) {
      a = x - 1e-3;
      found_a = true;
    } else if (found_a && !up && prev_up) {
      b = x - 1e-3;
      break;
    }
    prev = v;
    prev_up = up;
  }
  const double va = naive_potential(a, k);
  double lo = std::min(a, r);
  while (2.0 * (naive_potential(lo, k) - va) < 40.0) lo -= 0.5;
  const auto below = static_cast<long>(std::ceil((r - lo) / h));

  auto cell = [h](double dv) {
    // exp(2 (V(x+h) - V(y))) runs log-linearly from exp(dv) down to 1.
    if (std::abs(dv) < 1e-8) return h * (1.0 + dv / 2.0);
    return h * std::expm1(dv) / dv;
  };
  double inner = 0.0;
  double v_prev = naive_potential(r - static_cast<double>(below) * h, k);
  for (long i = 1; i <= below; ++i) {
    const double v = naive_potential(r - static_cast<double>(below - i) * h, k);
    const double dv = 2.0 * (v - v_prev);
    inner = std::exp(dv) * inner + cell(dv);
    v_prev = v;
  }
  double outer = 0.5 * inner;
  for (long i = 1;; ++i) {
    const double x = r + static_cast<double>(i) * h;
    const double v = naive_potential(x, k);
    const double dv = 2.0 * (v - v_prev);
    inner = std::exp(dv) * inner + cell(dv);
    v_prev = v;
    if (x > b && inner < 1e-13 * outer * h) {
      outer += 0.5 * inner;
      break;
    }
    outer += inner;
  }
  return 2.0 * outer * h;
}

inline std::vector<std::int64_t> poisson_samples(double mean, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::poisson_distribution<std::int64_t> d(mean);
  std::vector<std::int64_t> out(n);
  for (auto& x : out) x = d(gen);
  return out;
}

inline std::vector<double> exponential_samples(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::exponential_distribution<double> d(1.0);
  std::vector<double> out(n);
  for (auto& x : out) x = d(gen);
  return out;
}

// Two-sample chi-square homogeneity statistic for nonnegative counts, with
// values at or above `top` pooled. Returns {statistic, degrees of freedom}.
inline std::pair<double, double> homogeneity_chi2(const std::vector<std::int64_t>& a,
                                                  const std::vector<std::int64_t>& b,
                                                  std::int64_t top) {
  std::vector<double> ca(static_cast<std::size_t>(top) + 1, 0.0), cb(ca.size(), 0.0);
  for (auto x : a) ca[static_cast<std::size_t>(std::min(x, top))] += 1.0;
  for (auto x : b) cb[static_cast<std::size_t>(std::min(x, top))] += 1.0;
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  double stat = 0.0;
  double cells = 0.0;
  for (std::size_t k = 0; k < ca.size(); ++k) {
    const double tot = ca[k] + cb[k];
    if (tot == 0.0) continue;
    cells += 1.0;
    const double ea = tot * na / (na + nb), eb = tot * nb / (na + nb);
    stat += (ca[k] - ea) * (ca[k] - ea) / ea + (cb[k] - eb) * (cb[k] - eb) / eb;
  }
  return {stat, cells - 1.0};
}

}  // namespace oracle

#pragma once

// Global adaptive Gauss-Kronrod (7/15) quadrature plus an outward scanner
// that locates truncation limits of a log-integrand.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <queue>
#include <span>
#include <stdexcept>
#include <vector>

namespace sinebeta::quad {

struct AdaptiveResult {
  double value = 0.0;
  double error = 0.0;
  std::size_t evaluations = 0;
  std::size_t segments = 0;
  bool converged = false;
};

namespace detail {

inline constexpr std::array<double, 8> kronrod_nodes = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};

inline constexpr std::array<double, 8> kronrod_weights = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};

// Gauss weights for kronrod_nodes[1], [3], [5], [7].
inline constexpr std::array<double, 4> gauss_weights = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Segment {
  double a;
  double b;
  double value;
  double error;
  friend bool operator<(const Segment& l, const Segment& r) {
    return l.error < r.error;
  }
};

template <class F>
Segment gauss_kronrod_15(F& f, double a, double b) {
  const double center = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const double fc = f(center);
  double kronrod = kronrod_weights[7] * fc;
  double gauss = gauss_weights[3] * fc;
  for (std::size_t j = 0; j < 7; ++j) {
    const double dx = half * kronrod_nodes[j];
    const double pair = f(center - dx) + f(center + dx);
    kronrod += kronrod_weights[j] * pair;
    if (j % 2 == 1) gauss += gauss_weights[j / 2] * pair;
  }
  kronrod *= half;
  gauss *= half;
  return {a, b, kronrod, std::abs(kronrod - gauss)};
}

}  // namespace detail

/// Integrates f over [breakpoints.front(), breakpoints.back()], starting from
/// the partition given by the breakpoints and bisecting the segment with the
/// largest error estimate until the total error is below
/// max(abs_tol, rel_tol |value|) or max_segments is reached.
template <class F>
AdaptiveResult integrate_adaptive(F&& f, std::span<const double> breakpoints,
                                  double rel_tol, double abs_tol = 0.0,
                                  std::size_t max_segments = 4000) {
  if (breakpoints.size() < 2) {
    throw std::invalid_argument("need at least two breakpoints");
  }
  std::size_t evals = 0;
  auto counted = [&](double x) {
    ++evals;
    return f(x);
  };
  std::priority_queue<detail::Segment> queue;
  double total = 0.0;
  double error = 0.0;
  for (std::size_t i = 0; i + 1 < breakpoints.size(); ++i) {
    if (!(breakpoints[i + 1] > breakpoints[i])) continue;
    auto s = detail::gauss_kronrod_15(counted, breakpoints[i], breakpoints[i + 1]);
    total += s.value;
    error += s.error;
    queue.push(s);
  }
  while (!queue.empty() && error > std::max(abs_tol, rel_tol * std::abs(total)) &&
         queue.size() < max_segments) {
    const auto worst = queue.top();
    const double mid = 0.5 * (worst.a + worst.b);
    if (!(mid > worst.a && mid < worst.b)) break;  // cannot bisect further
    queue.pop();
    const auto left = detail::gauss_kronrod_15(counted, worst.a, mid);
    const auto right = detail::gauss_kronrod_15(counted, mid, worst.b);
    total += left.value + right.value - worst.value;
    error += left.error + right.error - worst.error;
    queue.push(left);
    queue.push(right);
  }
  // Recompute the sums to shed accumulated cancellation.
  AdaptiveResult out;
  out.segments = queue.size();
  while (!queue.empty()) {
    out.value += queue.top().value;
    out.error += queue.top().error;
    queue.pop();
  }
  out.evaluations = evals;
  out.converged = out.error <= std::max(abs_tol, rel_tol * std::abs(out.value));
  return out;
}

struct ScanOptions {
  double initial_step = 0.25;
  double max_step = 2.0;
  double min_step = 1e-13;
  double max_change = 1.0;  // log-units allowed between neighbouring points
  double drop = 36.8413614879047;  // -log(1e-16)
  std::size_t max_points = 100000;
};

struct Scan {
  std::vector<double> points;  // in traversal order, starting at `start`
  double peak = -std::numeric_limits<double>::infinity();
  bool reached_limit = false;
};

/// Walks from `start` in `direction` (+1 or -1) until the log-integrand falls
/// `drop` below the running peak (seeded with `reference`) or `limit` is hit.
/// Steps shrink where the log-integrand changes quickly, so the returned
/// points resolve every feature down to `max_change` log-units.
template <class LogF>
Scan scan_log(LogF&& log_f, double start, int direction, double limit,
              double reference, const ScanOptions& opt = {}) {
  Scan scan;
  const double dir = direction >= 0 ? 1.0 : -1.0;
  double y = start;
  double ly = log_f(y);
  if (std::isnan(ly)) throw std::domain_error("log-integrand is NaN");
  scan.points.push_back(y);
  scan.peak = std::max(reference, ly);
  if (ly < scan.peak - opt.drop) return scan;
  double step = opt.initial_step;
  while (scan.points.size() < opt.max_points) {
    const double remaining = (limit - y) * dir;
    if (!(remaining > 0.0)) {
      scan.reached_limit = true;
      return scan;
    }
    double trial_step = std::min(step, remaining);
    double y_new = y + dir * trial_step;
    double l_new = log_f(y_new);
    const double floor_step = opt.min_step * std::max(1.0, std::abs(y));
    while (std::isfinite(l_new) && std::abs(l_new - ly) > opt.max_change &&
           trial_step > floor_step) {
      trial_step *= 0.5;
      y_new = y + dir * trial_step;
      l_new = log_f(y_new);
    }
    if (std::isnan(l_new)) throw std::domain_error("log-integrand is NaN");
    const double change = std::abs(l_new - ly);
    y = y_new;
    ly = l_new;
    scan.points.push_back(y);
    scan.peak = std::max(scan.peak, ly);
    if (!(ly >= scan.peak - opt.drop)) return scan;
    step = trial_step;
    if (change < 0.25 * opt.max_change) step = std::min(2.0 * step, opt.max_step);
  }
  throw std::runtime_error("log-integrand scan did not terminate");
}

}  // namespace sinebeta::quad

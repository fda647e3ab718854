#include "sinebeta/well.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numbers>
#include <sstream>

#include <boost/math/tools/roots.hpp>
#include <omp.h>

#include "sinebeta/quadrature.hpp"
#include "sinebeta/rng.hpp"

namespace sinebeta::well {

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();
constexpr double two_pi = 2.0 * std::numbers::pi;

// log cosh r without overflow.
double log_cosh(double r) {
  const double x = std::abs(r);
  return x + std::log1p(std::exp(-2.0 * x)) - std::numbers::ln2;
}

// -2 V'(r) = k cosh r + tanh r, with k = lambda beta / 4.
double twice_neg_slope(double r, double k) { return k * std::cosh(r) + std::tanh(r); }

quad::ScanOptions scan_options(const QuadratureSettings& qset) {
  quad::ScanOptions opt;
  opt.drop = qset.log_drop();
  return opt;
}

struct Window {
  double lo;
  double hi;
  std::vector<double> points;
};

void add_window(std::vector<Window>& windows, const quad::Scan& scan, double anchor) {
  const auto [mn, mx] = std::minmax_element(scan.points.begin(), scan.points.end());
  Window w{std::min(*mn, anchor), std::max(*mx, anchor), scan.points};
  if (!(w.hi > w.lo)) return;
  w.points.push_back(anchor);
  windows.push_back(std::move(w));
}

std::vector<Window> merge_windows(std::vector<Window> windows) {
  std::sort(windows.begin(), windows.end(),
            [](const Window& l, const Window& r) { return l.lo < r.lo; });
  std::vector<Window> merged;
  for (auto& w : windows) {
    if (!merged.empty() && w.lo <= merged.back().hi) {
      auto& m = merged.back();
      m.hi = std::max(m.hi, w.hi);
      m.points.insert(m.points.end(), w.points.begin(), w.points.end());
    } else {
      merged.push_back(std::move(w));
    }
  }
  for (auto& m : merged) {
    std::sort(m.points.begin(), m.points.end());
    m.points.erase(std::unique(m.points.begin(), m.points.end()), m.points.end());
  }
  return merged;
}

// Integrates exp(log_f - reference) over the windows; returns the sum and
// accumulates error and evaluation counts.
template <class LogF>
double integrate_windows(LogF& log_f, double reference,
                         const std::vector<Window>& windows,
                         const QuadratureSettings& qset, double rel_tol,
                         std::size_t& evaluations, double& abs_error,
                         bool& converged) {
  auto f = [&](double y) { return std::exp(log_f(y) - reference); };
  double sum = 0.0;
  for (const auto& w : windows) {
    auto res = quad::integrate_adaptive(f, w.points, rel_tol, 0.0, qset.max_segments);
    evaluations += res.evaluations;
    sum += res.value;
    abs_error += res.error;
    converged = converged && res.converged;
  }
  return sum;
}

}  // namespace

double WellSpec::time_scale() const { return 8.0 * std::numbers::pi / (beta * lambda); }

std::vector<std::string> validate(const WellSpec& spec) {
  if (!(std::isfinite(spec.beta) && spec.beta > 0.0 && std::isfinite(spec.lambda) &&
        spec.lambda > 0.0)) {
    throw std::invalid_argument("well requires beta > 0 and lambda > 0");
  }
  std::vector<std::string> warnings;
  if (!well_exists(spec)) {
    std::ostringstream os;
    os << "lambda beta / 8 = " << spec.lambda * spec.beta / 8.0
       << " >= 1/4: the potential has no interior extrema";
    warnings.push_back(os.str());
  }
  return warnings;
}

bool well_exists(const WellSpec& spec) { return spec.lambda * spec.beta / 8.0 < 0.25; }

double potential(double r, const WellSpec& spec) {
  return -0.5 * (spec.slope() * std::sinh(r) + log_cosh(r));
}

double potential_slope(double r, const WellSpec& spec) {
  return -0.5 * twice_neg_slope(r, spec.slope());
}

double potential_gap(double x, double y, const WellSpec& spec) {
  // sinh x - sinh y = 2 cosh((x+y)/2) sinh((x-y)/2)
  const double dsinh = 2.0 * std::cosh(0.5 * (x + y)) * std::sinh(0.5 * (x - y));
  const double dlogcosh = log_cosh(x) - log_cosh(y);
  const double k_dsinh = (x == y) ? 0.0 : spec.slope() * dsinh;
  return -0.5 * (k_dsinh + dlogcosh);
}

DegenerateWellError::DegenerateWellError(const WellSpec& spec)
    : std::domain_error("degenerate well: lambda beta / 8 = " +
                        std::to_string(spec.lambda * spec.beta / 8.0) +
                        " >= 1/4, the potential has no local extrema") {}

CriticalPoints critical_points(const WellSpec& spec) {
  validate(spec);
  if (!well_exists(spec)) throw DegenerateWellError(spec);
  const double k = spec.slope();
  auto f = [k](double r) { return twice_neg_slope(r, k); };
  // The right-hand side -sinh r / cosh^2 r peaks at r = -asinh(1).
  const double r_star = -std::asinh(1.0);
  auto tol = boost::math::tools::eps_tolerance<double>(52);

  double lo = std::min(r_star, std::log(k / 2.0)) - 1.0;
  while (f(lo) <= 0.0) lo -= 1.0;
  std::uintmax_t iters = 300;
  auto [a_lo, a_hi] = boost::math::tools::toms748_solve(f, lo, r_star, tol, iters);
  iters = 300;
  auto [b_lo, b_hi] = boost::math::tools::toms748_solve(f, r_star, 0.0, tol, iters);

  CriticalPoints cp;
  cp.a = std::abs(f(a_lo)) < std::abs(f(a_hi)) ? a_lo : a_hi;
  cp.b = std::abs(f(b_lo)) < std::abs(f(b_hi)) ? b_lo : b_hi;
  cp.v_a = potential(cp.a, spec);
  cp.v_b = potential(cp.b, spec);
  return cp;
}

double QuadratureSettings::log_drop() const { return -std::log(truncation_ratio); }

void validate(const QuadratureSettings& qset) {
  if (!(qset.rel_tol > 0.0 && qset.rel_tol < 1e-4)) {
    throw std::invalid_argument("quadrature rel_tol must lie in (0, 1e-4)");
  }
  if (!(qset.truncation_ratio > 0.0 && qset.truncation_ratio < 1.0)) {
    throw std::invalid_argument("truncation ratio must lie in (0, 1)");
  }
  if (qset.max_segments < 16) {
    throw std::invalid_argument("segment budget too small");
  }
}

QuadratureFailure::QuadratureFailure(const std::string& what, QuadratureResult partial)
    : std::runtime_error(what), partial_(partial) {}

double log_inner_integral(double x, const WellSpec& spec, const CriticalPoints& cp,
                          const QuadratureSettings& qset, std::size_t* evaluations,
                          double* rel_error) {
  // Integrate over the offset u = x - y >= 0 so that the peak at y = x stays
  // resolvable when it is narrower than the spacing of doubles near x.
  const double k = spec.slope();
  const double lc_x = log_cosh(x);
  std::size_t evals = 0;
  auto ell = [&](double u) {
    ++evals;
    if (u == 0.0) return 0.0;
    const double dsinh = 2.0 * std::cosh(x - 0.5 * u) * std::sinh(0.5 * u);
    return -(k * dsinh + lc_x - log_cosh(x - u));
  };
  const bool has_bottom = cp.a < x;
  const double u_bottom = x - cp.a;
  const double ell_bottom = has_bottom ? ell(u_bottom) : -inf;
  const double reference = std::max(0.0, ell_bottom);
  const auto opt = scan_options(qset);

  // Peak at u = 0, walking away from x; and, when the well bottom lies left
  // of x, the peak at u = x - a in both directions.
  std::vector<Window> windows;
  add_window(windows, quad::scan_log(ell, 0.0, +1, has_bottom ? u_bottom : inf, reference, opt),
             0.0);
  if (has_bottom) {
    auto far = quad::scan_log(ell, u_bottom, +1, inf, reference, opt);
    auto near = quad::scan_log(ell, u_bottom, -1, 0.0, reference, opt);
    far.points.insert(far.points.end(), near.points.begin(), near.points.end());
    add_window(windows, far, u_bottom);
  }
  windows = merge_windows(std::move(windows));

  double abs_error = 0.0;
  bool converged = true;
  const double inner_tol = 0.05 * qset.rel_tol;
  const double sum = integrate_windows(ell, reference, windows, qset, inner_tol, evals,
                                       abs_error, converged);
  if (evaluations) *evaluations += evals;
  if (rel_error) *rel_error = sum > 0.0 ? abs_error / sum : inf;
  if (!converged || !(sum > 0.0)) {
    throw QuadratureFailure("inner integral did not converge at x = " + std::to_string(x),
                            {std::exp(reference) * sum, std::exp(reference) * abs_error, evals});
  }
  return reference + std::log(sum);
}

QuadratureResult expected_exit_time(double r, const WellSpec& spec,
                                    const QuadratureSettings& qset) {
  validate(qset);
  if (!std::isfinite(r)) throw std::invalid_argument("start point must be finite");
  const CriticalPoints cp = critical_points(spec);

  std::size_t evals = 0;
  double worst_inner = 0.0;
  auto log_outer = [&](double x) {
    double rel = 0.0;
    const double v = log_inner_integral(x, spec, cp, qset, &evals, &rel);
    worst_inner = std::max(worst_inner, rel);
    return v;
  };

  const auto scan = quad::scan_log(log_outer, r, +1, inf, -inf, scan_options(qset));
  const double reference = scan.peak;
  std::vector<double> points = scan.points;
  std::sort(points.begin(), points.end());

  auto f = [&](double x) { return std::exp(log_outer(x) - reference); };
  QuadratureResult out;
  quad::AdaptiveResult res;
  if (points.size() >= 2) {
    res = quad::integrate_adaptive(f, points, 0.5 * qset.rel_tol, 0.0, qset.max_segments);
  } else {
    res.converged = true;
  }
  const double scale = 2.0 * std::exp(reference);
  out.value = scale * res.value;
  out.est_error = scale * res.error + out.value * worst_inner;
  out.evaluations = evals;
  if (!res.converged || out.est_error > qset.rel_tol * std::abs(out.value)) {
    throw QuadratureFailure("exit-time quadrature did not reach rel_tol within budget",
                            out);
  }
  return out;
}

namespace {

// Cell weights for int_0^1 exp(u L) u du and int_0^1 exp(u L) (1 - u) du.
void cell_weights(double L, double& w_left, double& w_right) {
  if (std::abs(L) < 1e-3) {
    w_left = 0.5 + L / 3.0 + L * L / 8.0 + L * L * L / 30.0;
    w_right = 0.5 + L / 6.0 + L * L / 24.0 + L * L * L / 120.0;
    return;
  }
  const double e = std::exp(std::min(L, 700.0));
  w_left = (e * (L - 1.0) + 1.0) / (L * L);
  w_right = (e - 1.0 - L) / (L * L);
}

// Uniform grid with r on a node. The inner integral is accumulated cell by
// cell: J_{k+1} = exp(L_k) J_k + h (w_left g_k + w_right g_{k+1}), with
// L_k = 2 [V(x_{k+1}) - V(x_k)] and the log-integrand linear in each cell.
struct GreenGrid {
  double h = 0.0;
  std::size_t r_index = 0;
  std::vector<double> growth;
  std::vector<double> w_left;
  std::vector<double> w_right;
  mutable std::vector<double> inner;

  std::size_t size() const { return growth.size() + 1; }

  // out = 2 int_x^hi J_g, i.e. the integral operator applied to g.
  void apply(const std::vector<double>& g, std::vector<double>& out) const {
    const std::size_t n = size();
    inner.assign(n, 0.0);
    for (std::size_t k = 0; k + 1 < n; ++k) {
      inner[k + 1] = growth[k] * inner[k] + h * (w_left[k] * g[k] + w_right[k] * g[k + 1]);
    }
    out.assign(n, 0.0);
    for (std::size_t k = n - 1; k-- > 0;) {
      out[k] = out[k + 1] + h * (inner[k] + inner[k + 1]);
    }
  }
};

GreenGrid build_grid(double r, double lo, double hi, double h, const WellSpec& spec) {
  GreenGrid grid;
  grid.h = h;
  const auto below = static_cast<std::size_t>(std::ceil(std::max(0.0, r - lo) / h));
  const auto above = static_cast<std::size_t>(std::ceil(std::max(h, hi - r) / h));
  const std::size_t n = below + above + 1;
  grid.r_index = below;
  const double start = r - static_cast<double>(below) * h;
  grid.growth.resize(n - 1);
  grid.w_left.resize(n - 1);
  grid.w_right.resize(n - 1);
  for (std::size_t k = 0; k + 1 < n; ++k) {
    const double x0 = start + static_cast<double>(k) * h;
    const double x1 = start + static_cast<double>(k + 1) * h;
    const double L = 2.0 * potential_gap(x1, x0, spec);
    grid.growth[k] = std::exp(std::min(L, 700.0));
    cell_weights(L, grid.w_left[k], grid.w_right[k]);
  }
  return grid;
}

struct FixedPointOutcome {
  double value = 0.0;
  double exit_time = 0.0;
  std::vector<double> picard;
  std::size_t iterations = 0;
  std::size_t sweeps = 0;
  bool converged = false;
};

FixedPointOutcome solve_fixed_point(const GreenGrid& grid, double xi_rescaled,
                                    double tol, const LaplaceSettings& lset) {
  FixedPointOutcome out;
  const std::size_t n = grid.size();
  std::vector<double> ones(n, 1.0), t_one, g(n, 1.0), tg, next(n);
  grid.apply(ones, t_one);
  ++out.sweeps;
  out.exit_time = t_one[grid.r_index];

  // Picard iterates: alternately upper and lower bounds of g.
  out.picard.push_back(1.0);
  {
    std::vector<double> p = ones, tp;
    for (std::size_t k = 0; k < lset.picard_iterates; ++k) {
      grid.apply(p, tp);
      ++out.sweeps;
      for (std::size_t i = 0; i < n; ++i) p[i] = 1.0 - xi_rescaled * tp[i];
      out.picard.push_back(p[grid.r_index]);
    }
  }

  // The operator is positive with spectral radius at most mu = xi' max T1;
  // the damping 2 / (2 + mu) makes the update a contraction of ratio
  // mu / (2 + mu).
  const double mu = xi_rescaled * *std::max_element(t_one.begin(), t_one.end());
  const double omega = 2.0 / (2.0 + mu);
  for (std::size_t it = 1; it <= lset.max_iterations; ++it) {
    grid.apply(g, tg);
    ++out.sweeps;
    double change = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      next[i] = (1.0 - omega) * g[i] + omega * (1.0 - xi_rescaled * tg[i]);
      change = std::max(change, std::abs(next[i] - g[i]));
    }
    g.swap(next);
    out.iterations = it;
    if (change < tol) {
      out.converged = true;
      break;
    }
  }
  out.value = g[grid.r_index];
  return out;
}

}  // namespace

LaplaceResult laplace_g(double r, double xi, const WellSpec& spec,
                        const QuadratureSettings& qset, const LaplaceSettings& lset) {
  validate(qset);
  if (!std::isfinite(r)) throw std::invalid_argument("start point must be finite");
  if (!(xi > 0.0 && std::isfinite(xi))) throw std::invalid_argument("xi must be > 0");
  if (!(lset.grid_step > 0.0 && lset.grid_step <= 0.05)) {
    throw std::invalid_argument("Laplace grid step must lie in (0, 0.05]");
  }
  const CriticalPoints cp = critical_points(spec);
  const auto opt = scan_options(qset);

  // Left end: where exp(-2V) has fallen `drop` below its value at the bottom.
  auto ell_bottom = [&](double y) { return 2.0 * potential_gap(cp.a, y, spec); };
  const auto left = quad::scan_log(ell_bottom, cp.a, -1, -inf, 0.0, opt);
  const double lo = std::min(r, *std::min_element(left.points.begin(), left.points.end()));
  // Right end: where the outer integrand has fallen `drop` below its peak.
  auto log_outer = [&](double x) { return log_inner_integral(x, spec, cp, qset); };
  const auto right = quad::scan_log(log_outer, cp.b, +1, inf, -inf, opt);
  const double hi = std::max(r, right.points.back());

  const double xi_rescaled = xi * spec.beta * spec.lambda / (8.0 * std::numbers::pi);
  const double tol = 0.1 * qset.rel_tol;

  const GreenGrid fine = build_grid(r, lo, hi, lset.grid_step, spec);
  const GreenGrid coarse = build_grid(r, lo, hi, 2.0 * lset.grid_step, spec);
  const auto f = solve_fixed_point(fine, xi_rescaled, tol, lset);
  const auto c = solve_fixed_point(coarse, xi_rescaled, tol, lset);

  LaplaceResult out;
  out.g.value = f.value;
  out.g.est_error = std::abs(f.value - c.value) / 3.0 + tol;
  out.g.evaluations = (f.sweeps * fine.size()) + (c.sweeps * coarse.size());
  out.rescaled_xi = xi_rescaled;
  out.exit_time = f.exit_time;
  out.picard = f.picard;
  out.lower_bound = f.picard.size() > 1 ? f.picard[1] : 1.0 - xi_rescaled * f.exit_time;
  out.upper_bound = f.picard.size() > 2 ? f.picard[2] : 1.0;
  out.iterations = f.iterations;
  out.converged = f.converged && c.converged;
  constexpr double slack = 1e-12;
  out.sandwich_holds = true;
  for (std::size_t k = 0; k < f.picard.size(); ++k) {
    const bool ok = (k % 2 == 0) ? f.value <= f.picard[k] + slack
                                 : f.value >= f.picard[k] - slack;
    out.sandwich_holds = out.sandwich_holds && ok;
  }
  return out;
}

double default_theta0(double beta) { return 4.0 * std::atan(std::pow(beta, 0.25)); }

double theta_from_r(double r) { return 4.0 * std::atan(std::exp(r)); }

std::vector<double> PassageSample::rescaled() const {
  std::vector<double> out(raw_times.size());
  std::transform(raw_times.begin(), raw_times.end(), out.begin(),
                 [this](double t) { return t * rescale; });
  return out;
}

double passage_time(const WellSpec& spec, double theta0, double step, double cap,
                    std::uint64_t key) {
  if (theta0 >= two_pi) return 0.0;
  NormalStream normal(key);
  const double drift_step = spec.slope() * step;
  const double noise_scale = 2.0 * std::sqrt(step);
  const auto max_steps = static_cast<std::uint64_t>(std::ceil(cap / step));
  double theta = theta0;
  for (std::uint64_t k = 1; k <= max_steps; ++k) {
    theta += drift_step + noise_scale * std::sin(0.5 * theta) * normal();
    if (theta >= two_pi) return static_cast<double>(k) * step;
  }
  return inf;
}

namespace {

void check_passage_inputs(const WellSpec& spec, double theta0,
                          const PassageSettings& settings) {
  validate(spec);
  if (!(theta0 > 0.0 && theta0 <= two_pi)) {
    throw std::invalid_argument("theta0 must lie in (0, 2 pi]");
  }
  if (!(settings.step > 0.0 && settings.step <= 0.05)) {
    throw std::invalid_argument("passage step must lie in (0, 0.05]");
  }
  if (!(settings.censor_factor > 0.0)) {
    throw std::invalid_argument("censor factor must be positive");
  }
}

PassageSample collect(const WellSpec& spec, double theta0, const std::vector<double>& times) {
  PassageSample s;
  s.theta0 = theta0;
  s.rescale = 1.0 / spec.time_scale();
  for (double t : times) {
    if (std::isfinite(t)) {
      s.raw_times.push_back(t);
    } else {
      ++s.censored;
    }
  }
  return s;
}

}  // namespace

PassageSample sample_passage_times(const WellSpec& spec, double theta0, std::size_t n,
                                   std::uint64_t seed, const PassageSettings& settings) {
  check_passage_inputs(spec, theta0, settings);
  const double cap = settings.censor_factor * spec.time_scale();
  std::vector<double> times(n);
  const int threads = settings.workers > 0 ? settings.workers : omp_get_max_threads();
  const auto count = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
  for (std::int64_t i = 0; i < count; ++i) {
    times[static_cast<std::size_t>(i)] = passage_time(
        spec, theta0, settings.step, cap, substream_key(seed, static_cast<std::uint64_t>(i)));
  }
  return collect(spec, theta0, times);
}

PassageSample sample_passage_times_serial(const WellSpec& spec, double theta0,
                                          std::size_t n, std::uint64_t seed,
                                          const PassageSettings& settings) {
  check_passage_inputs(spec, theta0, settings);
  const double cap = settings.censor_factor * spec.time_scale();
  std::vector<double> times(n);
  for (std::size_t i = 0; i < n; ++i) {
    times[i] = passage_time(spec, theta0, settings.step, cap, substream_key(seed, i));
  }
  return collect(spec, theta0, times);
}

}  // namespace sinebeta::well

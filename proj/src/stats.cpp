#include "sinebeta/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/poisson.hpp>
#include <omp.h>

#include "sinebeta/rng.hpp"

namespace sinebeta::stats {

using sde::ProcessId;
using sde::ProcessKind;
using sde::two_pi;

std::size_t RescaledMeasure::count_up_to(double t) const {
  return static_cast<std::size_t>(
      std::upper_bound(points.begin(), points.end(), t) - points.begin());
}

RescaledMeasure rescale_ledger(const sde::ProcessJumps& jumps, double beta) {
  const double scale = beta / (8.0 * std::numbers::pi);
  RescaledMeasure m;
  m.source = jumps.id;
  m.points.reserve(jumps.jump_times.size());
  for (double t : jumps.jump_times) m.points.push_back(t * scale);
  return m;
}

RescaledMeasure rescale_ledger(const sde::JumpLedger& ledger, const ProcessId& id,
                               double beta) {
  const auto* p = ledger.find(id);
  if (!p) throw std::out_of_range("process not present in ledger");
  return rescale_ledger(*p, beta);
}

std::optional<std::size_t> grid_index(std::span<const double> lambdas, double lambda) {
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    const double scale = std::max({1.0, std::abs(lambdas[i]), std::abs(lambda)});
    if (std::abs(lambdas[i] - lambda) <= 1e-9 * scale) return i;
  }
  return std::nullopt;
}

std::optional<ProcessId> process_for_interval(const sde::ModelParams& params,
                                              const Interval& interval) {
  if (interval.lo > interval.hi) {
    throw ConfigError("interval lower end exceeds upper end");
  }
  const auto lo = grid_index(params.lambdas, interval.lo);
  const auto hi = grid_index(params.lambdas, interval.hi);
  if (!lo || !hi) {
    throw ConfigError("interval [" + std::to_string(interval.lo) + ", " +
                      std::to_string(interval.hi) +
                      "] has an endpoint missing from the lambda grid");
  }
  if (*lo == *hi) return std::nullopt;
  if (params.lambdas[*lo] == 0.0) return ProcessId{ProcessKind::level, 0, *hi};
  return ProcessId{ProcessKind::difference, *lo, *hi};
}

std::vector<std::int64_t> CountTable::column(std::size_t k) const {
  std::vector<std::int64_t> out;
  out.reserve(counts.size());
  for (std::size_t r = 0; r < counts.size(); ++r) {
    if (!unsettled[r][k]) out.push_back(counts[r][k]);
  }
  return out;
}

std::vector<std::pair<std::int64_t, std::int64_t>> CountTable::joint(
    std::size_t i, std::size_t j) const {
  std::vector<std::pair<std::int64_t, std::int64_t>> out;
  out.reserve(counts.size());
  for (std::size_t r = 0; r < counts.size(); ++r) {
    if (!unsettled[r][i] && !unsettled[r][j]) out.emplace_back(counts[r][i], counts[r][j]);
  }
  return out;
}

double CountTable::unsettled_fraction(std::size_t k) const {
  if (counts.empty()) return 0.0;
  std::size_t bad = 0;
  for (const auto& row : unsettled) bad += row[k] ? 1 : 0;
  return static_cast<double>(bad) / static_cast<double>(counts.size());
}

CountTable counts_for_intervals(std::span<const sde::ReplicateResult> results,
                                const sde::ModelParams& params,
                                std::span<const Interval> intervals) {
  CountTable table;
  table.intervals.assign(intervals.begin(), intervals.end());
  std::vector<std::optional<ProcessId>> ids;
  for (const auto& iv : intervals) ids.push_back(process_for_interval(params, iv));

  for (const auto& r : results) {
    table.replicates.push_back(r.replicate);
    auto& row = table.counts.emplace_back(intervals.size(), 0);
    auto& flags = table.unsettled.emplace_back(intervals.size(), false);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!ids[k]) {
        flags[k] = r.path.aborted;
        continue;
      }
      const auto* p = r.ledger.find(*ids[k]);
      if (!p) {
        throw ConfigError("interval " + std::to_string(k) +
                          " needs a difference process that was not tracked");
      }
      row[k] = std::max<std::int64_t>(p->endpoint_count, 0);
      flags[k] = r.path.aborted || p->unsettled || p->count_mismatch ||
                 p->endpoint_count < 0;
    }
  }
  return table;
}

bool Check::holds() const {
  switch (comparator) {
    case Comparator::less: return value < threshold;
    case Comparator::less_equal: return value <= threshold;
    case Comparator::greater: return value > threshold;
    case Comparator::greater_equal: return value >= threshold;
  }
  return false;
}

std::string comparator_symbol(Comparator c) {
  switch (c) {
    case Comparator::less: return "<";
    case Comparator::less_equal: return "<=";
    case Comparator::greater: return ">";
    case Comparator::greater_equal: return ">=";
  }
  return "?";
}

bool TestReport::pass() const {
  return !checks.empty() &&
         std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.holds(); });
}

namespace {

double chi_square_upper(double statistic, double df) {
  if (!(df >= 1.0) || !std::isfinite(statistic)) return std::nan("");
  boost::math::chi_squared dist(df);
  return boost::math::cdf(boost::math::complement(dist, std::max(statistic, 0.0)));
}

// Contiguous groups [first, last] over category indices 0..K.
struct Cell {
  std::size_t first;
  std::size_t last;
};

std::size_t distinct_values(std::vector<std::int64_t> v) {
  std::sort(v.begin(), v.end());
  return static_cast<std::size_t>(std::unique(v.begin(), v.end()) - v.begin());
}

}  // namespace

TestReport poisson_gof(std::span<const std::int64_t> samples, double mean,
                       const GofOptions& options) {
  if (samples.size() < options.min_samples) {
    throw std::invalid_argument("poisson_gof needs at least " +
                                std::to_string(options.min_samples) + " samples");
  }
  if (!(mean > 0.0) || !std::isfinite(mean)) {
    throw std::invalid_argument("poisson_gof mean must be positive");
  }
  for (auto s : samples) {
    if (s < 0) throw std::invalid_argument("poisson_gof counts must be nonnegative");
  }
  const double n = static_cast<double>(samples.size());
  const std::int64_t max_obs = *std::max_element(samples.begin(), samples.end());
  boost::math::poisson_distribution<double> pois(mean);

  // Categories 0..K-1 individually and K meaning ">= K".
  std::size_t K = static_cast<std::size_t>(max_obs) + 1;
  while (n * boost::math::cdf(boost::math::complement(pois, static_cast<double>(K) - 1.0)) >
         options.min_expected) {
    ++K;
  }
  std::vector<double> observed(K + 1, 0.0);
  for (auto s : samples) observed[std::min<std::size_t>(static_cast<std::size_t>(s), K)] += 1.0;
  std::vector<double> expected(K + 1);
  for (std::size_t k = 0; k < K; ++k) {
    expected[k] = n * boost::math::pdf(pois, static_cast<double>(k));
  }
  expected[K] = n * boost::math::cdf(boost::math::complement(pois, static_cast<double>(K) - 1.0));

  double tv = 0.0;
  for (std::size_t k = 0; k <= K; ++k) tv += std::abs(observed[k] - expected[k]) / n;
  tv *= 0.5;

  std::vector<Cell> cells;
  std::vector<double> cell_obs, cell_exp;
  double acc_o = 0.0, acc_e = 0.0;
  std::size_t start = 0;
  for (std::size_t k = 0; k <= K; ++k) {
    acc_o += observed[k];
    acc_e += expected[k];
    if (acc_e >= options.min_expected) {
      cells.push_back({start, k});
      cell_obs.push_back(acc_o);
      cell_exp.push_back(acc_e);
      acc_o = acc_e = 0.0;
      start = k + 1;
    }
  }
  if (acc_e > 0.0 || acc_o > 0.0) {
    if (cells.empty()) {
      cells.push_back({start, K});
      cell_obs.push_back(acc_o);
      cell_exp.push_back(acc_e);
    } else {
      cells.back().last = K;
      cell_obs.back() += acc_o;
      cell_exp.back() += acc_e;
    }
  }
  double chi2 = 0.0;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const double d = cell_obs[c] - cell_exp[c];
    chi2 += d * d / cell_exp[c];
  }
  const double df = static_cast<double>(cells.size()) - 1.0;
  const double p = chi_square_upper(chi2, df);

  TestReport r;
  r.name = "poisson_gof";
  r.statistic = chi2;
  r.reference = "poisson(" + std::to_string(mean) + ")";
  r.p_value = p;
  r.n = samples.size();
  r.details["df"] = df;
  r.details["cells"] = static_cast<double>(cells.size());
  r.details["tv_distance"] = tv;
  r.details["mean"] = mean;
  r.details["empirical_mean"] =
      std::accumulate(samples.begin(), samples.end(), 0.0) / n;
  r.details["p0_empirical"] = observed[0] / n;
  r.details["p0_target"] = std::exp(-mean);

  const std::size_t distinct =
      distinct_values(std::vector<std::int64_t>(samples.begin(), samples.end()));
  r.checks.push_back({"distinct_values", static_cast<double>(distinct),
                      Comparator::greater_equal, 2.0});
  r.checks.push_back({"p_value", std::isnan(p) ? 0.0 : p, Comparator::greater, options.alpha});
  if (options.max_tv) {
    r.checks.push_back({"tv_distance", tv, Comparator::less, *options.max_tv});
  }
  if (distinct < 2) {
    r.diagnostic = "degenerate sample: every count equals " + std::to_string(samples[0]);
  } else if (std::isnan(p)) {
    r.diagnostic = "fewer than two cells after merging";
  }
  return r;
}

double kolmogorov_tail(double x) {
  if (!(x > 0.0)) return 1.0;
  if (x < 1.18) {
    // P[K <= x] = sqrt(2 pi)/x sum exp(-(2k-1)^2 pi^2 / (8 x^2)).
    const double a = std::numbers::pi * std::numbers::pi / (8.0 * x * x);
    double s = 0.0;
    for (int k = 1; k <= 20; ++k) {
      const double odd = 2.0 * k - 1.0;
      s += std::exp(-odd * odd * a);
    }
    return std::clamp(1.0 - std::sqrt(2.0 * std::numbers::pi) / x * s, 0.0, 1.0);
  }
  double s = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * x * x);
    s += (k % 2 == 1 ? term : -term);
    if (term < 1e-17) break;
  }
  return std::clamp(2.0 * s, 0.0, 1.0);
}

TestReport ks_exponential(std::span<const double> sample, const KsOptions& options) {
  if (sample.size() < options.min_samples) {
    throw std::invalid_argument("ks_exponential needs at least " +
                                std::to_string(options.min_samples) + " samples");
  }
  for (double x : sample) {
    if (!(x > 0.0) || !std::isfinite(x)) {
      throw std::invalid_argument("ks_exponential needs positive finite values");
    }
  }
  std::vector<double> xs(sample.begin(), sample.end());
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = -std::expm1(-xs[i]);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
  }
  const double rn = std::sqrt(n);
  const double threshold = options.coefficient / rn + options.margin;

  TestReport r;
  r.name = "ks_exponential";
  r.statistic = d;
  r.reference = "exponential(1)";
  r.p_value = kolmogorov_tail((rn + 0.12 + 0.11 / rn) * d);
  r.n = xs.size();
  r.details["threshold"] = threshold;
  r.details["margin"] = options.margin;
  r.details["mean"] = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  r.checks.push_back({"ks_distance", d, Comparator::less, threshold});
  if (xs.front() == xs.back()) r.diagnostic = "degenerate sample: all values equal";
  return r;
}

TestReport independence_test(const CountTable& table, std::size_t i, std::size_t j,
                             const IndependenceOptions& options) {
  if (i >= table.intervals.size() || j >= table.intervals.size()) {
    throw std::out_of_range("interval id out of range");
  }
  const auto& a = table.intervals[i];
  const auto& b = table.intervals[j];
  if (i == j || std::max(a.lo, b.lo) < std::min(a.hi, b.hi)) {
    throw ConfigError("independence_test needs disjoint intervals");
  }
  const auto rows = table.joint(i, j);
  if (rows.size() < options.min_rows) {
    throw std::invalid_argument("independence_test needs at least " +
                                std::to_string(options.min_rows) + " settled replicates");
  }
  const double n = static_cast<double>(rows.size());

  double mx = 0.0, my = 0.0;
  for (auto [x, y] : rows) {
    mx += static_cast<double>(x);
    my += static_cast<double>(y);
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  std::size_t z_x = 0, z_y = 0, z_xy = 0;
  for (auto [x, y] : rows) {
    const double dx = static_cast<double>(x) - mx;
    const double dy = static_cast<double>(y) - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
    z_x += x == 0;
    z_y += y == 0;
    z_xy += (x == 0 && y == 0);
  }
  const bool degenerate = !(sxx > 0.0 && syy > 0.0);
  const double corr = degenerate ? std::nan("") : sxy / std::sqrt(sxx * syy);
  double ci_low = std::nan(""), ci_high = std::nan("");
  if (!degenerate && std::abs(corr) < 1.0) {
    const double z = std::atanh(corr);
    const double se = 1.0 / std::sqrt(n - 3.0);
    ci_low = std::tanh(z - 1.959963984540054 * se);
    ci_high = std::tanh(z + 1.959963984540054 * se);
  } else if (!degenerate) {
    ci_low = ci_high = corr;
  }
  const double gap = std::abs(static_cast<double>(z_xy) / n -
                              static_cast<double>(z_x) / n * static_cast<double>(z_y) / n);

  // Contingency table with categories merged until every expected cell
  // reaches min_expected.
  std::int64_t max_x = 0, max_y = 0;
  for (auto [x, y] : rows) {
    max_x = std::max(max_x, x);
    max_y = std::max(max_y, y);
  }
  std::vector<std::vector<double>> obs(static_cast<std::size_t>(max_x) + 1,
                                       std::vector<double>(static_cast<std::size_t>(max_y) + 1, 0.0));
  for (auto [x, y] : rows) obs[static_cast<std::size_t>(x)][static_cast<std::size_t>(y)] += 1.0;
  std::vector<Cell> gx, gy;
  for (std::size_t k = 0; k < obs.size(); ++k) gx.push_back({k, k});
  for (std::size_t k = 0; k < obs[0].size(); ++k) gy.push_back({k, k});

  auto margin = [&](const std::vector<Cell>& g, bool rows_axis) {
    std::vector<double> m(g.size(), 0.0);
    for (std::size_t c = 0; c < g.size(); ++c) {
      for (std::size_t k = g[c].first; k <= g[c].last; ++k) {
        if (rows_axis) {
          for (double v : obs[k]) m[c] += v;
        } else {
          for (const auto& row : obs) m[c] += row[k];
        }
      }
    }
    return m;
  };
  auto merge_smallest = [](std::vector<Cell>& g, const std::vector<double>& m) {
    const auto c = static_cast<std::size_t>(std::min_element(m.begin(), m.end()) - m.begin());
    std::size_t other;
    if (c == 0) {
      other = 1;
    } else if (c + 1 == g.size()) {
      other = c - 1;
    } else {
      other = m[c - 1] <= m[c + 1] ? c - 1 : c + 1;
    }
    const std::size_t keep = std::min(c, other);
    g[keep] = {g[std::min(c, other)].first, g[std::max(c, other)].last};
    g.erase(g.begin() + static_cast<std::ptrdiff_t>(keep + 1));
  };
  std::vector<double> rx = margin(gx, true), cy = margin(gy, false);
  while (gx.size() > 1 && gy.size() > 1) {
    const double min_rx = *std::min_element(rx.begin(), rx.end());
    const double min_cy = *std::min_element(cy.begin(), cy.end());
    if (min_rx * min_cy / n >= options.min_expected) break;
    if (min_rx <= min_cy) {
      merge_smallest(gx, rx);
      rx = margin(gx, true);
    } else {
      merge_smallest(gy, cy);
      cy = margin(gy, false);
    }
  }
  double chi2 = 0.0;
  for (std::size_t u = 0; u < gx.size(); ++u) {
    for (std::size_t v = 0; v < gy.size(); ++v) {
      double o = 0.0;
      for (std::size_t x = gx[u].first; x <= gx[u].last; ++x) {
        for (std::size_t y = gy[v].first; y <= gy[v].last; ++y) o += obs[x][y];
      }
      const double e = rx[u] * cy[v] / n;
      if (e > 0.0) chi2 += (o - e) * (o - e) / e;
    }
  }
  const double df = static_cast<double>(gx.size() - 1) * static_cast<double>(gy.size() - 1);
  const double p = chi_square_upper(chi2, df);

  TestReport r;
  r.name = "independence";
  r.statistic = corr;
  r.reference = "0";
  r.p_value = p;
  r.n = rows.size();
  r.details["correlation"] = corr;
  r.details["correlation_ci_low"] = ci_low;
  r.details["correlation_ci_high"] = ci_high;
  r.details["void_gap"] = gap;
  r.details["contingency_chi2"] = chi2;
  r.details["contingency_df"] = df;
  r.details["interval_i_lo"] = a.lo;
  r.details["interval_i_hi"] = a.hi;
  r.details["interval_j_lo"] = b.lo;
  r.details["interval_j_hi"] = b.hi;
  r.checks.push_back({"abs_correlation", degenerate ? 1.0 : std::abs(corr), Comparator::less,
                      options.max_abs_correlation});
  r.checks.push_back({"void_gap", gap, Comparator::less, options.max_void_gap});
  r.checks.push_back({"contingency_p_value", std::isnan(p) ? 0.0 : p, Comparator::greater,
                      options.alpha});
  if (degenerate) {
    r.diagnostic = "a count column is constant; correlation undefined";
  } else if (std::isnan(p)) {
    r.diagnostic = "contingency table collapsed to a single row or column";
  }
  return r;
}

double default_match_window(double beta) { return 9.0 * std::log(1.0 / beta); }

namespace {

bool has_match(const std::vector<double>& sorted, double t, double window) {
  auto it = std::lower_bound(sorted.begin(), sorted.end(), t - window);
  return it != sorted.end() && *it <= t + window;
}

}  // namespace

CouplingDiagnostics coupling_diagnostics(std::span<const sde::ReplicateResult> results,
                                         const sde::ModelParams& params, std::size_t lo,
                                         std::size_t hi, double window) {
  const std::size_t m = params.lambdas.size();
  if (lo > hi || hi >= m) throw std::out_of_range("coupling pair out of range");
  CouplingDiagnostics d;
  d.window = window;
  std::uint64_t below = 0, far = 0;
  std::size_t included = 0, simultaneous = 0;
  const ProcessId diff_id{ProcessKind::difference, lo, hi};
  for (const auto& r : results) {
    if (r.path.aborted) continue;
    d.steps += r.path.steps;
    far += r.path.far_from_zero_steps.at(lo);
    const auto& low = r.ledger.processes.at(lo);
    const auto& high = r.ledger.processes.at(hi);
    const sde::ProcessJumps* diff = nullptr;
    if (lo != hi) {
      for (std::size_t q = m; q < r.ledger.processes.size(); ++q) {
        if (r.ledger.processes[q].id == diff_id) {
          diff = &r.ledger.processes[q];
          below += r.path.below_steps.at(q - m);
          break;
        }
      }
      if (!diff) throw ConfigError("coupling pair was not tracked");
    }
    for (double t : low.jump_times) {
      ++d.level_jumps;
      if (lo == hi || has_match(high.jump_times, t, window)) ++included;
      if (diff && has_match(diff->jump_times, t, window)) ++simultaneous;
    }
  }
  if (d.steps > 0) {
    d.theta_hat = static_cast<double>(below) / static_cast<double>(d.steps);
    d.xi_hat = static_cast<double>(far) / static_cast<double>(d.steps);
  }
  if (d.level_jumps > 0) {
    d.inclusion_fraction = static_cast<double>(included) / static_cast<double>(d.level_jumps);
    d.simultaneity_fraction =
        static_cast<double>(simultaneous) / static_cast<double>(d.level_jumps);
  } else {
    d.inclusion_fraction = 1.0;
  }
  return d;
}

Proportion wilson_interval(std::size_t successes, std::size_t trials, double z) {
  Proportion p;
  p.successes = successes;
  p.trials = trials;
  if (trials == 0) {
    p.ci_high = 1.0;
    return p;
  }
  const double n = static_cast<double>(trials);
  const double ph = static_cast<double>(successes) / n;
  p.estimate = ph;
  const double z2 = z * z;
  const double centre = (ph + z2 / (2.0 * n)) / (1.0 + z2 / n);
  const double half = z / (1.0 + z2 / n) * std::sqrt(ph * (1.0 - ph) / n + z2 / (4.0 * n * n));
  p.ci_low = std::max(0.0, centre - half);
  p.ci_high = std::min(1.0, centre + half);
  return p;
}

namespace {

bool reaches(double beta, double lambda, double alpha0, double target, double window,
             double h, std::uint64_t key) {
  if (alpha0 >= target) return true;
  NormalStream normal(key);
  const double sh = std::sqrt(h);
  const auto steps = static_cast<std::uint64_t>(std::ceil(window / h));
  double alpha = alpha0;
  for (std::uint64_t k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) * h;
    const double dx = sh * normal();
    const double dy = sh * normal();
    alpha += sde::drift(lambda, beta, t) * h + (std::cos(alpha) - 1.0) * dx +
             std::sin(alpha) * dy;
    if (alpha >= target) return true;
  }
  return false;
}

}  // namespace

Proportion reach_probability(double beta, double lambda, double alpha0, double window,
                             std::size_t n, std::uint64_t seed,
                             const ReachSettings& settings) {
  if (!(beta > 0.0) || !(lambda >= 0.0) || !(window >= 0.0) || !std::isfinite(alpha0)) {
    throw std::invalid_argument("invalid reach probe parameters");
  }
  if (!(settings.step > 0.0 && settings.step <= 0.05)) {
    throw std::invalid_argument("reach step must lie in (0, 0.05]");
  }
  const double target = two_pi * std::ceil(alpha0 / two_pi);
  const auto count = static_cast<std::int64_t>(n);
  const int threads = settings.workers > 0 ? settings.workers : omp_get_max_threads();
  std::size_t hits = 0;
#pragma omp parallel for schedule(dynamic, 16) num_threads(threads) reduction(+ : hits)
  for (std::int64_t i = 0; i < count; ++i) {
    hits += reaches(beta, lambda, alpha0, target, window, settings.step,
                    substream_key(seed, static_cast<std::uint64_t>(i)))
                ? 1
                : 0;
  }
  return wilson_interval(hits, n);
}

TestReport fast_reach_probe(double beta, double lambda, double epsilon, std::size_t n,
                            std::uint64_t seed, double min_probability,
                            const ReachSettings& settings) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) {
    throw std::invalid_argument("epsilon must lie in (0, 1)");
  }
  if (!(beta > 0.0 && beta < 1.0)) {
    throw std::invalid_argument("fast reach probe needs 0 < beta < 1");
  }
  const double alpha0 = two_pi - 4.0 * std::atan(std::pow(beta, epsilon));
  const double window = default_match_window(beta);
  const auto p = reach_probability(beta, lambda, alpha0, window, n, seed, settings);

  TestReport r;
  r.name = "fast_reach";
  r.statistic = p.estimate;
  r.reference = std::to_string(min_probability);
  r.n = n;
  r.details["epsilon"] = epsilon;
  r.details["alpha0"] = alpha0;
  r.details["window"] = window;
  r.details["ci_low"] = p.ci_low;
  r.details["ci_high"] = p.ci_high;
  r.checks.push_back({"reach_probability", p.estimate, Comparator::greater_equal,
                      min_probability});
  return r;
}

}  // namespace sinebeta::stats

#pragma once

// Point-process views of the jump ledgers and the statistical checks run on
// them. Everything here is a pure function of its inputs except the
// fast-reach probe, which simulates.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sinebeta/sde.hpp"

namespace sinebeta::stats {

struct RescaledMeasure {
  sde::ProcessId source;
  std::vector<double> points;  // physical jump time * beta / (8 pi), sorted

  /// Number of points in [0, t].
  std::size_t count_up_to(double t) const;
};

RescaledMeasure rescale_ledger(const sde::ProcessJumps& jumps, double beta);
/// Throws std::out_of_range when the ledger does not hold `id`.
RescaledMeasure rescale_ledger(const sde::JumpLedger& ledger,
                               const sde::ProcessId& id, double beta);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Index of `lambda` in the grid (relative tolerance 1e-9), or nullopt.
std::optional<std::size_t> grid_index(std::span<const double> lambdas,
                                      double lambda);

/// The ledger process whose endpoint count is the number of points in the
/// interval: the level of hi when lo is 0, otherwise the difference (lo, hi).
/// Throws ConfigError if an endpoint is not on the grid or lo > hi. Returns
/// nullopt for an empty interval.
std::optional<sde::ProcessId> process_for_interval(const sde::ModelParams& params,
                                                   const Interval& interval);

struct CountTable {
  std::vector<Interval> intervals;
  std::vector<std::uint64_t> replicates;
  // counts[row][k], unsettled[row][k]: replicate row, interval k. A cell is
  // unsettled when its process is unsettled, its endpoint and running counts
  // disagree, or the replicate aborted.
  std::vector<std::vector<std::int64_t>> counts;
  std::vector<std::vector<bool>> unsettled;

  std::size_t rows() const { return counts.size(); }
  /// Settled counts of interval k, in row order.
  std::vector<std::int64_t> column(std::size_t k) const;
  /// Rows settled in both intervals, as (count_i, count_j).
  std::vector<std::pair<std::int64_t, std::int64_t>> joint(std::size_t i,
                                                           std::size_t j) const;
  double unsettled_fraction(std::size_t k) const;
};

/// Rows follow `results` order. Throws ConfigError for intervals that do not
/// map onto the grid or whose process was not tracked.
CountTable counts_for_intervals(std::span<const sde::ReplicateResult> results,
                                const sde::ModelParams& params,
                                std::span<const Interval> intervals);

enum class Comparator { less, less_equal, greater, greater_equal };

struct Check {
  std::string name;
  double value = 0.0;
  Comparator comparator = Comparator::less;
  double threshold = 0.0;

  bool holds() const;
};

std::string comparator_symbol(Comparator c);

struct ReportMetadata {
  double beta = 0.0;
  std::vector<double> lambdas;
  std::uint64_t seed = 0;
  std::string settings_hash;
};

struct TestReport {
  std::string suite;
  std::string name;
  double statistic = 0.0;
  std::string reference;  // distribution id or a number
  std::optional<double> p_value;
  std::vector<Check> checks;
  std::size_t n = 0;
  ReportMetadata metadata;
  std::map<std::string, double> details;
  std::string diagnostic;

  /// True iff there is at least one check and every check holds.
  bool pass() const;
};

struct GofOptions {
  double alpha = 0.01;
  std::optional<double> max_tv;
  double min_expected = 5.0;
  std::size_t min_samples = 500;
};

/// Chi-square goodness of fit of counts against Poisson(mean), cells merged
/// until each expects at least min_expected. Also reports the total-variation
/// distance between the empirical and the target pmf.
TestReport poisson_gof(std::span<const std::int64_t> samples, double mean,
                       const GofOptions& options = {});

struct KsOptions {
  double coefficient = 1.36;  // 95% asymptotic critical value
  double margin = 0.0;
  std::size_t min_samples = 200;
};

/// One-sample Kolmogorov-Smirnov distance to the unit exponential.
TestReport ks_exponential(std::span<const double> sample,
                          const KsOptions& options = {});

/// Asymptotic Kolmogorov tail P[sqrt(n) D > x], with the usual small-sample
/// correction applied to x by the caller.
double kolmogorov_tail(double x);

struct IndependenceOptions {
  double max_abs_correlation = 0.1;
  double max_void_gap = 0.05;
  double alpha = 0.01;
  double min_expected = 5.0;
  std::size_t min_rows = 1000;
};

/// Correlation (with a 95% Fisher-z interval), void factorization gap and a
/// contingency chi-square for two disjoint intervals of the table.
TestReport independence_test(const CountTable& table, std::size_t i,
                             std::size_t j,
                             const IndependenceOptions& options = {});

struct CouplingDiagnostics {
  double theta_hat = 0.0;
  double xi_hat = 0.0;
  double inclusion_fraction = 0.0;
  double simultaneity_fraction = 0.0;
  std::size_t level_jumps = 0;  // jumps of the lower level, all replicates
  std::uint64_t steps = 0;
  double window = 0.0;
};

/// 9 log(1/beta).
double default_match_window(double beta);

/// Diagnostics for the pair (lambdas[lo], lambdas[hi]), lo <= hi. When
/// lo < hi the pair must have been tracked. Jumps are matched when they lie
/// within `window` physical time of each other.
CouplingDiagnostics coupling_diagnostics(
    std::span<const sde::ReplicateResult> results, const sde::ModelParams& params,
    std::size_t lo, std::size_t hi, double window);

struct Proportion {
  std::size_t successes = 0;
  std::size_t trials = 0;
  double estimate = 0.0;
  double ci_low = 0.0;   // Wilson 95%
  double ci_high = 0.0;
};

Proportion wilson_interval(std::size_t successes, std::size_t trials,
                           double z = 1.959963984540054);

struct ReachSettings {
  double step = 0.01;
  int workers = 0;
};

/// Probability that the single-speed sine equation started at alpha0 (at
/// time 0, drift included) climbs to the smallest multiple of 2 pi that is
/// >= alpha0 within `window`. Starting on a multiple of 2 pi counts as reached.
Proportion reach_probability(double beta, double lambda, double alpha0,
                             double window, std::size_t n, std::uint64_t seed,
                             const ReachSettings& settings = {});

/// Start at 2 pi - 4 arctan(beta^epsilon), window 9 log(1/beta); passes when
/// the estimate is at least min_probability.
TestReport fast_reach_probe(double beta, double lambda, double epsilon,
                            std::size_t n, std::uint64_t seed,
                            double min_probability = 0.95,
                            const ReachSettings& settings = {});

}  // namespace sinebeta::stats

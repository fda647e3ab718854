#include <doctest.h>

#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "sinebeta/batch.hpp"
#include "sinebeta/stats.hpp"

using namespace sinebeta;
using namespace sinebeta::stats;
using sde::two_pi;

TEST_CASE("rescaling a ledger") {
  sde::ProcessJumps empty;
  CHECK(rescale_ledger(empty, 0.02).points.empty());

  sde::ProcessJumps one;
  one.jump_times = {0.75 * 8.0 * M_PI / 0.02, 1.5 * 8.0 * M_PI / 0.02};
  const auto m = rescale_ledger(one, 0.02);
  REQUIRE(m.points.size() == 2);
  CHECK(m.points[0] == doctest::Approx(0.75));
  CHECK(m.points[1] == doctest::Approx(1.5));
  CHECK(m.count_up_to(1.0) == 1);
  CHECK(m.count_up_to(0.5) == 0);

  sde::JumpLedger ledger;
  CHECK_THROWS_AS(rescale_ledger(ledger, {}, 0.02), std::out_of_range);
}

TEST_CASE("intervals map onto ledger processes") {
  const sde::ModelParams p{0.1, {0.0, two_pi, 2.0 * two_pi}};
  CHECK_FALSE(process_for_interval(p, {two_pi, two_pi}));
  const auto level = process_for_interval(p, {0.0, two_pi});
  REQUIRE(level);
  CHECK(level->kind == sde::ProcessKind::level);
  CHECK(level->hi == 1);
  const auto diff = process_for_interval(p, {two_pi, 2.0 * two_pi});
  REQUIRE(diff);
  CHECK(diff->kind == sde::ProcessKind::difference);
  CHECK_THROWS_AS(process_for_interval(p, {0.0, 3.0}), ConfigError);
  CHECK_THROWS_AS(process_for_interval(p, {two_pi, 0.0}), ConfigError);
}

TEST_CASE("count tables flag unsettled cells and reject untracked pairs") {
  sde::BatchRequest batch;
  batch.replicate.params = {0.5, {0.0, two_pi, 2.0 * two_pi}};
  batch.replicate.tracked_pairs = {{1, 2}};
  batch.master_seed = 4;
  batch.count = 30;
  auto results = sde::simulate_batch(batch);
  results[0].ledger.processes[1].unsettled = true;
  const std::vector<Interval> ivs = {{0.0, two_pi}, {two_pi, two_pi}, {two_pi, 2.0 * two_pi}};
  const auto table = counts_for_intervals(results, batch.replicate.params, ivs);
  CHECK(table.rows() == 30);
  CHECK(table.unsettled[0][0]);
  CHECK(table.column(0).size() == 29);
  for (std::size_t r = 0; r < table.rows(); ++r) {
    CHECK(table.counts[r][1] == 0);
    for (auto c : table.counts[r]) CHECK(c >= 0);
  }
  CHECK(table.unsettled_fraction(0) == doctest::Approx(1.0 / 30.0));

  const std::vector<Interval> untracked = {{0.0, two_pi}, {two_pi, 2.0 * two_pi}};
  batch.replicate.tracked_pairs.clear();
  const auto bare = sde::simulate_batch(batch);
  CHECK_THROWS_AS(counts_for_intervals(bare, batch.replicate.params, untracked), ConfigError);
}

TEST_CASE("checks and pass") {
  CHECK(Check{"x", 1.0, Comparator::less, 2.0}.holds());
  CHECK_FALSE(Check{"x", 2.0, Comparator::less, 2.0}.holds());
  CHECK(Check{"x", 2.0, Comparator::less_equal, 2.0}.holds());
  CHECK(Check{"x", 2.0, Comparator::greater_equal, 2.0}.holds());
  CHECK_FALSE(Check{"x", std::nan(""), Comparator::greater, 0.0}.holds());
  TestReport r;
  CHECK_FALSE(r.pass());
  r.checks.push_back({"x", 1.0, Comparator::less, 2.0});
  CHECK(r.pass());
  r.checks.push_back({"y", 3.0, Comparator::less, 2.0});
  CHECK_FALSE(r.pass());
}

TEST_CASE("poisson goodness of fit") {
  const auto good = oracle::poisson_samples(1.0, 2000, 10);
  GofOptions opt;
  opt.max_tv = 0.06;
  const auto r = poisson_gof(good, 1.0, opt);
  CHECK(r.pass());
  REQUIRE(r.p_value);
  CHECK(r.details.at("tv_distance") < 0.06);
  CHECK(r.details.at("p0_target") == doctest::Approx(std::exp(-1.0)));

  const auto wrong = poisson_gof(oracle::poisson_samples(1.3, 2000, 11), 1.0);
  CHECK_FALSE(wrong.pass());

  const std::vector<std::int64_t> zeros(600, 0);
  const auto z = poisson_gof(zeros, 1.0);
  CHECK_FALSE(z.pass());
  CHECK_FALSE(z.diagnostic.empty());

  CHECK_THROWS(poisson_gof(std::vector<std::int64_t>(499, 1), 1.0));
  CHECK_THROWS(poisson_gof(std::vector<std::int64_t>(600, -1), 1.0));
  CHECK_THROWS(poisson_gof(good, 0.0));
}

TEST_CASE("Kolmogorov tail values") {
  CHECK(kolmogorov_tail(1.3581) == doctest::Approx(0.05).epsilon(1e-3));
  CHECK(kolmogorov_tail(1.2238) == doctest::Approx(0.10).epsilon(1e-3));
  CHECK(kolmogorov_tail(0.5) == doctest::Approx(0.9639).epsilon(1e-3));
  CHECK(kolmogorov_tail(0.0) == 1.0);
}

TEST_CASE("Kolmogorov-Smirnov against the unit exponential") {
  const auto r = ks_exponential(oracle::exponential_samples(1000, 3));
  CHECK(r.pass());
  CHECK(r.statistic < 1.36 / std::sqrt(1000.0));

  std::vector<double> shifted = oracle::exponential_samples(1000, 3);
  for (auto& x : shifted) x *= 1.5;
  CHECK_FALSE(ks_exponential(shifted).pass());

  CHECK_FALSE(ks_exponential(std::vector<double>(300, 1.0)).pass());
  CHECK_THROWS(ks_exponential(std::vector<double>(199, 1.0)));
  std::vector<double> bad(300, 1.0);
  bad[5] = 0.0;
  CHECK_THROWS(ks_exponential(bad));
}

namespace {

CountTable table_from(const std::vector<std::int64_t>& a, const std::vector<std::int64_t>& b) {
  CountTable t;
  t.intervals = {{0.0, 1.0}, {2.0, 3.0}};
  for (std::size_t i = 0; i < a.size(); ++i) {
    t.replicates.push_back(i);
    t.counts.push_back({a[i], b[i]});
    t.unsettled.push_back({false, false});
  }
  return t;
}

}  // namespace

TEST_CASE("independence of independent Poisson columns") {
  const auto t = table_from(oracle::poisson_samples(1.0, 2000, 1), oracle::poisson_samples(1.0, 2000, 2));
  const auto r = independence_test(t, 0, 1);
  CHECK(r.details.at("correlation_ci_low") < 0.0);
  CHECK(r.details.at("correlation_ci_high") > 0.0);
  CHECK(r.details.at("void_gap") < 0.02);
  CHECK(r.pass());
}

TEST_CASE("a duplicated column is not independent") {
  const auto a = oracle::poisson_samples(1.0, 2000, 1);
  const auto r = independence_test(table_from(a, a), 0, 1);
  CHECK_FALSE(r.pass());
}

TEST_CASE("independence preconditions") {
  auto t = table_from(oracle::poisson_samples(1.0, 2000, 1), oracle::poisson_samples(1.0, 2000, 2));
  CHECK_THROWS_AS(independence_test(t, 0, 0), ConfigError);
  t.intervals[1] = {0.5, 2.0};
  CHECK_THROWS_AS(independence_test(t, 0, 1), ConfigError);
  t.intervals[1] = {1.0, 2.0};
  CHECK_NOTHROW(independence_test(t, 0, 1));
  const auto small = table_from(oracle::poisson_samples(1.0, 999, 1), oracle::poisson_samples(1.0, 999, 2));
  CHECK_THROWS(independence_test(small, 0, 1));
}

TEST_CASE("coupling diagnostics on a simulated family") {
  sde::BatchRequest batch;
  batch.replicate.params = {0.1, {two_pi, 2.0 * two_pi}};
  batch.replicate.tracked_pairs = {{0, 1}};
  batch.master_seed = 31;
  batch.count = 60;
  const auto results = sde::simulate_batch(batch);
  const double w = default_match_window(0.1);
  CHECK(w == doctest::Approx(9.0 * std::log(10.0)));

  const auto same = coupling_diagnostics(results, batch.replicate.params, 0, 0, w);
  CHECK(same.theta_hat == 0.0);
  CHECK(same.inclusion_fraction == 1.0);
  CHECK(same.simultaneity_fraction == 0.0);

  const auto d = coupling_diagnostics(results, batch.replicate.params, 0, 1, w);
  for (double f : {d.theta_hat, d.xi_hat, d.inclusion_fraction, d.simultaneity_fraction}) {
    CHECK(f >= 0.0);
    CHECK(f <= 1.0);
  }
  CHECK(d.level_jumps > 0);
  CHECK(d.inclusion_fraction > 0.9);
  CHECK_THROWS(coupling_diagnostics(results, batch.replicate.params, 1, 0, w));

  batch.replicate.tracked_pairs.clear();
  const auto bare = sde::simulate_batch(batch);
  CHECK_THROWS_AS(coupling_diagnostics(bare, batch.replicate.params, 0, 1, w), ConfigError);
}

TEST_CASE("Wilson interval") {
  const auto p = wilson_interval(50, 100);
  CHECK(p.estimate == 0.5);
  CHECK(p.ci_low == doctest::Approx(0.4038).epsilon(1e-3));
  CHECK(p.ci_high == doctest::Approx(0.5962).epsilon(1e-3));
  const auto all = wilson_interval(100, 100);
  CHECK(all.ci_high == 1.0);
  CHECK(all.ci_low < 1.0);
}

TEST_CASE("reach probability") {
  const auto at = reach_probability(0.05, two_pi, two_pi, 10.0, 50, 1);
  CHECK(at.successes == 50);
  const auto zero_window = reach_probability(0.05, two_pi, 6.0, 0.0, 50, 1);
  CHECK(zero_window.successes == 0);
  ReachSettings serial;
  serial.workers = 1;
  ReachSettings four;
  four.workers = 4;
  CHECK(reach_probability(0.05, two_pi, 6.0, 5.0, 200, 9, serial).successes ==
        reach_probability(0.05, two_pi, 6.0, 5.0, 200, 9, four).successes);
  CHECK_THROWS(fast_reach_probe(0.05, two_pi, 0.0, 10, 1));
  CHECK_THROWS(fast_reach_probe(0.05, two_pi, 1.0, 10, 1));
}

TEST_CASE("count variance over mean falls as beta grows") {
  auto vmr = [](double beta, std::size_t n) {
    sde::BatchRequest batch;
    batch.replicate.params = {beta, {0.0, 2.0 * two_pi}};
    batch.master_seed = 202;
    batch.count = n;
    const auto results = sde::simulate_batch(batch);
    const std::vector<Interval> ivs = {{0.0, 2.0 * two_pi}};
    const auto col = counts_for_intervals(results, batch.replicate.params, ivs).column(0);
    const double mean = std::accumulate(col.begin(), col.end(), 0.0) / static_cast<double>(col.size());
    double var = 0.0;
    for (auto c : col) var += (static_cast<double>(c) - mean) * (static_cast<double>(c) - mean);
    var /= static_cast<double>(col.size() - 1);
    return var / mean;
  };
  const double rigid = vmr(20.0, 400);
  const double middle = vmr(2.0, 400);
  const double loose = vmr(0.05, 400);
  CHECK(rigid < middle);
  CHECK(middle < loose);
  CHECK(loose == doctest::Approx(1.0).epsilon(0.25));
}

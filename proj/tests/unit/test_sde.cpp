#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/distributions/chi_squared.hpp>

#include "oracles.hpp"
#include "sinebeta/batch.hpp"
#include "sinebeta/rng.hpp"
#include "sinebeta/sde.hpp"
#include "sinebeta/stats.hpp"

using namespace sinebeta;
using sde::two_pi;

TEST_CASE("model parameters are validated") {
  CHECK_THROWS_AS(sde::validate(sde::ModelParams{0.0, {1.0}}), std::invalid_argument);
  CHECK_THROWS_AS(sde::validate(sde::ModelParams{1.0, {}}), std::invalid_argument);
  CHECK_THROWS_AS(sde::validate(sde::ModelParams{1.0, {-1.0, 2.0}}), std::invalid_argument);
  CHECK_THROWS_AS(sde::validate(sde::ModelParams{1.0, {2.0, 2.0}}), std::invalid_argument);
  CHECK_THROWS_AS(sde::validate(sde::ModelParams{1.0, {3.0, 2.0}}), std::invalid_argument);
  CHECK(sde::validate(sde::ModelParams{1.0, {0.0, 2.0}}).empty());
  CHECK_FALSE(sde::validate(sde::ModelParams{20.0, {1.0}}).empty());
}

TEST_CASE("integrator settings are validated") {
  sde::IntegratorSettings s;
  CHECK_NOTHROW(sde::validate(s));
  s.step = 0.0;
  CHECK_THROWS(sde::validate(s));
  s.step = 0.06;
  CHECK_THROWS(sde::validate(s));
  s = {};
  s.horizon_rescaled = 2.0;
  CHECK_THROWS(sde::validate(s));
  s = {};
  s.settle_band = 4.0;
  CHECK_THROWS(sde::validate(s));
  s = {};
  CHECK(s.physical_horizon(0.02) == doctest::Approx(3.0 * 8.0 * M_PI / 0.02));
}

TEST_CASE("drift and wrapping") {
  CHECK(sde::drift(2.0, 0.5, 0.0) == doctest::Approx(0.25));
  CHECK(sde::drift(2.0, 0.5, 8.0) == doctest::Approx(0.25 * std::exp(-1.0)));
  CHECK(sde::wrap_2pi(0.0) == 0.0);
  CHECK(sde::wrap_2pi(two_pi + 0.5) == doctest::Approx(0.5));
  CHECK(sde::wrap_2pi(-0.5) == doctest::Approx(two_pi - 0.5));
}

TEST_CASE("one Euler step applies the shared noise with (cos a - 1, sin a)") {
  sde::ModelParams p{0.4, {0.0, 1.0, 3.0}};
  sde::FamilyState s{0.0, {0.0, 1.2, 4.0}};
  const sde::NoiseIncrements n{0.03, -0.07};
  const double h = 0.01;
  const auto next = sde::step_family(s, n, p, h);
  CHECK(next.t == doctest::Approx(h));
  for (std::size_t i = 0; i < 3; ++i) {
    const double a = s.alphas[i];
    const double expect = a + sde::drift(p.lambdas[i], p.beta, 0.0) * h +
                          (std::cos(a) - 1.0) * n.dx + std::sin(a) * n.dy;
    CHECK(next.alphas[i] == doctest::Approx(expect).epsilon(1e-14));
  }
  // At alpha = 0 the noise coefficient vanishes.
  CHECK(next.alphas[0] == 0.0);
}

TEST_CASE("a non-finite state raises") {
  sde::ModelParams p{0.4, {1.0}};
  sde::FamilyState s{0.0, {std::numeric_limits<double>::quiet_NaN()}};
  CHECK_THROWS_AS(sde::step_family(s, {0.1, 0.1}, p, 0.01), sde::NonFiniteStateError);
}

TEST_CASE("substream keys depend on seed and index only") {
  static_assert(substream_key(1, 2) == substream_key(1, 2));
  CHECK(substream_key(1, 2) != substream_key(2, 1));
  CHECK(substream_key(1, 2) != substream_key(1, 3));
  NormalStream a(substream_key(9, 4)), b(substream_key(9, 4));
  for (int i = 0; i < 10; ++i) CHECK(a() == b());
}

namespace {

sde::ReplicateRequest small_request(double beta) {
  sde::ReplicateRequest r;
  r.params = {beta, {0.0, two_pi, 2.0 * two_pi}};
  r.tracked_pairs = {{1, 2}};
  return r;
}

}  // namespace

TEST_CASE("a replicate is a deterministic function of its key") {
  const auto req = small_request(0.5);
  const auto a = sde::simulate_replicate(req, 77, 3);
  const auto b = sde::simulate_replicate(req, 77, 3);
  const auto c = sde::simulate_replicate(req, 78, 3);
  CHECK(a.path.final_alphas == b.path.final_alphas);
  CHECK(a.path.final_alphas != c.path.final_alphas);
  REQUIRE(a.ledger.processes.size() == 4);
  for (std::size_t p = 0; p < 4; ++p) {
    CHECK(a.ledger.processes[p].jump_times == b.ledger.processes[p].jump_times);
  }
}

TEST_CASE("ledger invariants hold on every replicate") {
  sde::BatchRequest batch;
  batch.replicate = small_request(0.5);
  batch.master_seed = 3;
  batch.count = 40;
  for (const auto& r : sde::simulate_batch(batch)) {
    CHECK_FALSE(r.path.aborted);
    // alpha_0 never leaves 0.
    CHECK(r.path.final_alphas[0] == 0.0);
    CHECK(r.ledger.processes[0].jump_times.empty());
    for (const auto& p : r.ledger.processes) {
      CHECK(p.running_count == static_cast<std::int64_t>(p.jump_times.size()));
      CHECK(std::is_sorted(p.jump_times.begin(), p.jump_times.end()));
      for (double t : p.jump_times) {
        CHECK(t >= 0.0);
        CHECK(t <= batch.replicate.settings.physical_horizon(0.5));
      }
    }
    CHECK(r.ledger.find({sde::ProcessKind::difference, 1, 2}) != nullptr);
    CHECK(r.ledger.find({sde::ProcessKind::difference, 0, 2}) == nullptr);
  }
}

TEST_CASE("the parallel batch matches the serial reference exactly") {
  sde::BatchRequest batch;
  batch.replicate = small_request(0.5);
  batch.replicate.checkpoints = {10.0, 50.0};
  batch.master_seed = 12;
  batch.first_replicate = 5;
  batch.count = 24;
  const auto serial = sde::simulate_batch_serial(batch);
  for (int workers : {1, 4}) {
    const auto parallel = sde::simulate_batch(batch, workers);
    REQUIRE(parallel.size() == serial.size());
    for (std::size_t i = 0; i < serial.size(); ++i) {
      CHECK(parallel[i].replicate == serial[i].replicate);
      CHECK(parallel[i].path.final_alphas == serial[i].path.final_alphas);
      CHECK(parallel[i].path.checkpoint_alphas == serial[i].path.checkpoint_alphas);
      for (std::size_t p = 0; p < serial[i].ledger.processes.size(); ++p) {
        CHECK(parallel[i].ledger.processes[p].jump_times ==
              serial[i].ledger.processes[p].jump_times);
      }
    }
  }
}

TEST_CASE("the family stays ordered in lambda up to rare discretisation slips") {
  sde::BatchRequest batch;
  batch.replicate.params = {0.5, {two_pi, 1.1 * two_pi}};
  batch.replicate.settings.step = 0.05;
  batch.master_seed = 8;
  batch.count = 100;
  std::uint64_t steps = 0, violations = 0;
  for (const auto& r : sde::simulate_batch(batch)) {
    steps += r.path.steps;
    violations += r.path.ordering_violations;
  }
  CHECK(static_cast<double>(violations) / static_cast<double>(steps) < 1e-4);
}

TEST_CASE("counts are additive over adjacent intervals") {
  sde::BatchRequest batch;
  batch.replicate.params = {0.2, {0.0, two_pi, 2.0 * two_pi}};
  batch.replicate.tracked_pairs = {{1, 2}};
  batch.master_seed = 21;
  batch.count = 150;
  const auto results = sde::simulate_batch(batch);
  const std::vector<stats::Interval> ivs = {{0.0, two_pi}, {two_pi, 2.0 * two_pi}, {0.0, 2.0 * two_pi}};
  const auto table = stats::counts_for_intervals(results, batch.replicate.params, ivs);
  std::size_t checked = 0;
  for (std::size_t r = 0; r < table.rows(); ++r) {
    if (table.unsettled[r][0] || table.unsettled[r][1] || table.unsettled[r][2]) continue;
    CHECK(table.counts[r][2] == table.counts[r][0] + table.counts[r][1]);
    ++checked;
  }
  CHECK(checked > 140);
}

TEST_CASE("a difference process has the law of a level process") {
  sde::BatchRequest family;
  family.replicate.params = {0.1, {two_pi, 2.0 * two_pi}};
  family.replicate.tracked_pairs = {{0, 1}};
  family.master_seed = 99;
  family.count = 2000;
  sde::BatchRequest level;
  level.replicate.params = {0.1, {0.0, two_pi}};
  level.master_seed = 100;
  level.count = 2000;
  const std::vector<stats::Interval> diff_iv = {{two_pi, 2.0 * two_pi}};
  const std::vector<stats::Interval> level_iv = {{0.0, two_pi}};
  const auto a = stats::counts_for_intervals(sde::simulate_batch(family), family.replicate.params,
                                             diff_iv);
  const auto b = stats::counts_for_intervals(sde::simulate_batch(level), level.replicate.params,
                                             level_iv);
  const auto [stat, df] = oracle::homogeneity_chi2(a.column(0), b.column(0), 3);
  boost::math::chi_squared dist(df);
  const double p = boost::math::cdf(boost::math::complement(dist, stat));
  CHECK(p > 0.01);
}

TEST_CASE("raw floor decrements stay below one percent of steps") {
  sde::BatchRequest batch;
  batch.replicate = small_request(0.5);
  batch.master_seed = 13;
  batch.count = 50;
  for (const auto& r : sde::simulate_batch(batch)) {
    CHECK(static_cast<double>(r.path.floor_decrements) < 0.01 * static_cast<double>(r.path.steps));
  }
}

TEST_CASE("the mean of alpha follows the drift integral") {
  sde::ModelParams p{0.5, {two_pi}};
  sde::IntegratorSettings s;
  const std::vector<double> checkpoints = {2.0, 8.0, 20.0};
  const auto curve = sde::mean_alpha(p, s, checkpoints, 400, 17);
  REQUIRE(curve.replicates == 400);
  for (std::size_t c = 0; c < checkpoints.size(); ++c) {
    const double exact = sde::mean_alpha_exact(two_pi, 0.5, checkpoints[c]);
    const double tol = 4.0 * curve.std_errors[c][0] + 2.0 * two_pi * 0.5 * s.step / 4.0;
    CHECK(std::abs(curve.means[c][0] - exact) <= tol);
  }
  CHECK_THROWS(sde::mean_alpha(p, s, checkpoints, 99, 17));
  CHECK_THROWS(sde::mean_alpha(p, s, {1e9}, 100, 17));
}

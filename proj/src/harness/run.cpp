#include "sinebeta/harness/run.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <cstdio>

#include "sinebeta/batch.hpp"
#include "sinebeta/harness/io.hpp"
#include "sinebeta/well.hpp"

namespace sinebeta::harness {

namespace {

using stats::Check;
using stats::Comparator;
using stats::TestReport;

std::size_t grid_at(const RunConfig& c, double lambda) {
  const auto i = stats::grid_index(c.params.lambdas, lambda);
  if (!i) throw ConfigError("lambda " + format_double(lambda) + " is not in the grid");
  return *i;
}

std::pair<std::size_t, std::size_t> coupling_indices(const RunConfig& c) {
  if (c.coupling.pair) {
    return {grid_at(c, c.coupling.pair->first), grid_at(c, c.coupling.pair->second)};
  }
  std::vector<std::size_t> positive;
  for (std::size_t i = 0; i < c.params.lambdas.size(); ++i) {
    if (c.params.lambdas[i] > 0.0) positive.push_back(i);
  }
  if (positive.size() < 2) throw ConfigError("coupling needs two positive lambdas");
  return {positive[0], positive[1]};
}

bool selected(const RunConfig& c, const std::string& suite) {
  return c.mode == Mode::verify &&
         std::find(c.suites.begin(), c.suites.end(), suite) != c.suites.end();
}

stats::ReportMetadata metadata(const RunConfig& c) {
  return {c.params.beta, c.params.lambdas, c.seed.value_or(0), config_hash(c)};
}

std::string short_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string interval_label(const stats::Interval& iv) {
  return "[" + short_number(iv.lo) + "," + short_number(iv.hi) + "]";
}

std::vector<double> checkpoint_times(const RunConfig& c) {
  std::vector<double> out;
  if (c.checkpoints == 0) return out;
  const double last = std::min(40.0 / c.params.beta, c.settings.physical_horizon(c.params.beta));
  for (std::size_t k = 1; k <= c.checkpoints; ++k) {
    // Rounded to the step grid so the checkpoint is an exact Euler time.
    const double t = last * static_cast<double>(k) / static_cast<double>(c.checkpoints);
    out.push_back(std::floor(t / c.settings.step) * c.settings.step);
  }
  return out;
}

}  // namespace

sde::ReplicateRequest replicate_request(const RunConfig& c) {
  sde::ReplicateRequest req;
  req.params = c.params;
  req.settings = c.settings;
  auto add_pair = [&](std::size_t lo, std::size_t hi) {
    const sde::IndexPair p{lo, hi};
    if (std::find(req.tracked_pairs.begin(), req.tracked_pairs.end(), p) ==
        req.tracked_pairs.end()) {
      req.tracked_pairs.push_back(p);
    }
  };
  for (const auto& iv : c.effective_intervals) {
    const auto id = stats::process_for_interval(c.params, iv);
    if (id && id->kind == sde::ProcessKind::difference) add_pair(id->lo, id->hi);
  }
  if (selected(c, "coupling")) {
    const auto [lo, hi] = coupling_indices(c);
    add_pair(lo, hi);
  }
  if (selected(c, "intensity")) req.checkpoints = checkpoint_times(c);
  return req;
}

Simulation simulate(const RunConfig& c) {
  Simulation sim;
  sim.request = replicate_request(c);
  sde::BatchRequest batch;
  batch.replicate = sim.request;
  batch.master_seed = c.seed.value();
  batch.count = c.replicates;
  sim.results = sde::simulate_batch(batch, c.workers);
  return sim;
}

stats::CountTable count_table(const RunConfig& c, const Simulation& sim) {
  return stats::counts_for_intervals(sim.results, c.params, c.effective_intervals);
}

std::string jumps_csv(const RunConfig& c, const Simulation& sim) {
  const double scale = c.params.beta / (8.0 * std::numbers::pi);
  std::string out = "#schema_version=1\nreplicate,process_id,kind,t_physical,t_rescaled,count_after\n";
  for (const auto& r : sim.results) {
    const std::string rep = std::to_string(r.replicate);
    for (std::size_t p = 0; p < r.ledger.processes.size(); ++p) {
      const auto& proc = r.ledger.processes[p];
      const char* kind = proc.id.kind == sde::ProcessKind::level ? "level" : "difference";
      std::int64_t count = 0;
      for (double t : proc.jump_times) {
        ++count;
        out += rep;
        out += ',';
        out += std::to_string(p);
        out += ',';
        out += kind;
        out += ',';
        out += format_double(t);
        out += ',';
        out += format_double(t * scale);
        out += ',';
        out += std::to_string(count);
        out += '\n';
      }
    }
  }
  return out;
}

std::string counts_csv(const stats::CountTable& table) {
  std::string out = "#schema_version=1\nreplicate,interval_id,count,unsettled_flag\n";
  for (std::size_t row = 0; row < table.rows(); ++row) {
    for (std::size_t k = 0; k < table.intervals.size(); ++k) {
      out += std::to_string(table.replicates[row]) + ',' + std::to_string(k) + ',' +
             std::to_string(table.counts[row][k]) + ',' + (table.unsettled[row][k] ? "1" : "0") +
             '\n';
    }
  }
  return out;
}

namespace {

TestReport settledness(const RunConfig& c, const stats::CountTable& table,
                       const std::string& suite) {
  TestReport r;
  r.suite = suite;
  r.name = "settledness";
  r.reference = format_double(c.max_unsettled_fraction);
  r.n = table.rows();
  double worst = 0.0;
  for (std::size_t k = 0; k < table.intervals.size(); ++k) {
    const double f = table.unsettled_fraction(k);
    r.details["unsettled_fraction_" + std::to_string(k)] = f;
    worst = std::max(worst, f);
  }
  r.statistic = worst;
  r.checks.push_back({"max_unsettled_fraction", worst, Comparator::less, c.max_unsettled_fraction});
  if (worst >= c.max_unsettled_fraction) {
    r.diagnostic = "too many unsettled or mismatched endpoints; raise the horizon";
  }
  return r;
}

}  // namespace

std::vector<TestReport> marginal_suite(const RunConfig& c, const stats::CountTable& table) {
  std::vector<TestReport> out;
  for (std::size_t k = 0; k < c.effective_intervals.size(); ++k) {
    const auto& iv = c.effective_intervals[k];
    const double mean = (iv.hi - iv.lo) / sde::two_pi;
    const auto column = table.column(k);
    TestReport r;
    if (mean == 0.0) {
      r.name = "empty_interval";
      r.reference = "0";
      r.n = column.size();
      const auto mx = column.empty() ? 0 : *std::max_element(column.begin(), column.end());
      r.statistic = static_cast<double>(mx);
      r.checks.push_back({"max_count", r.statistic, Comparator::less_equal, 0.0});
    } else if (column.size() < 500) {
      r.name = "poisson_gof";
      r.reference = "poisson(" + format_double(mean) + ")";
      r.n = column.size();
      r.checks.push_back({"settled_samples", static_cast<double>(column.size()),
                          Comparator::greater_equal, 500.0});
      r.diagnostic = "fewer than 500 settled samples";
    } else {
      stats::GofOptions opt;
      opt.max_tv = c.max_tv;
      r = stats::poisson_gof(column, mean, opt);
    }
    r.suite = "marginal";
    r.name += interval_label(c.intervals[k]);
    r.details["interval_id"] = static_cast<double>(k);
    r.details["interval_lo"] = c.intervals[k].lo;
    r.details["interval_hi"] = c.intervals[k].hi;
    r.details["effective_lo"] = iv.lo;
    r.details["effective_hi"] = iv.hi;
    r.metadata = metadata(c);
    out.push_back(std::move(r));
  }
  auto s = settledness(c, table, "marginal");
  s.metadata = metadata(c);
  out.push_back(std::move(s));
  return out;
}

std::vector<TestReport> intensity_suite(const RunConfig& c, const Simulation& sim) {
  std::vector<TestReport> out;
  const double beta = c.params.beta;
  std::vector<const sde::ReplicateResult*> used;
  for (const auto& r : sim.results) {
    if (!r.path.aborted) used.push_back(&r);
  }
  const double n = static_cast<double>(used.size());

  for (std::size_t i = 0; i < c.params.lambdas.size(); ++i) {
    const double lambda = c.params.lambdas[i];
    if (!(lambda > 0.0)) continue;
    for (double t : {0.5, 1.0, 2.0}) {
      if (t > c.settings.horizon_rescaled) continue;
      double sum = 0.0;
      for (const auto* r : used) {
        sum += static_cast<double>(
            stats::rescale_ledger(r->ledger.processes[i], beta).count_up_to(t));
      }
      const double mean = n > 0 ? sum / n : 0.0;
      const double target = lambda / sde::two_pi * -std::expm1(-sde::two_pi * t);
      TestReport r;
      r.suite = "intensity";
      r.name = "intensity[lambda=" + short_number(lambda) + ",t=" + short_number(t) + "]";
      r.statistic = mean;
      r.reference = format_double(target);
      r.n = used.size();
      r.details["lambda"] = lambda;
      r.details["t"] = t;
      r.details["relative_error"] = std::abs(mean - target) / target;
      r.checks.push_back({"relative_error", r.details["relative_error"], Comparator::less,
                          c.intensity_tolerance});
      r.metadata = metadata(c);
      out.push_back(std::move(r));
    }
  }

  // Mean identity at the checkpoints for the first positive lambda.
  const auto& times = sim.request.checkpoints;
  const auto first = std::find_if(c.params.lambdas.begin(), c.params.lambdas.end(),
                                  [](double l) { return l > 0.0; });
  if (!times.empty() && first != c.params.lambdas.end() && used.size() > 1) {
    const auto i = static_cast<std::size_t>(first - c.params.lambdas.begin());
    const double lambda = *first;
    for (std::size_t k = 0; k < times.size(); ++k) {
      double mean = 0.0, m2 = 0.0, cnt = 0.0;
      for (const auto* r : used) {
        const double x = r->path.checkpoint_alphas[k][i];
        cnt += 1.0;
        const double d = x - mean;
        mean += d / cnt;
        m2 += d * (x - mean);
      }
      const double se = std::sqrt(m2 / (cnt - 1.0) / cnt);
      const double exact = sde::mean_alpha_exact(lambda, beta, times[k]);
      const double tol = 3.0 * se + 2.0 * lambda * beta * c.settings.step / 4.0;
      TestReport r;
      r.suite = "intensity";
      r.name = "mean_identity[lambda=" + short_number(lambda) + ",t=" + short_number(times[k]) + "]";
      r.statistic = mean;
      r.reference = format_double(exact);
      r.n = used.size();
      r.details["t_physical"] = times[k];
      r.details["std_error"] = se;
      r.details["tolerance"] = tol;
      r.checks.push_back({"abs_error", std::abs(mean - exact), Comparator::less_equal, tol});
      r.metadata = metadata(c);
      out.push_back(std::move(r));
    }
  }
  return out;
}

std::vector<TestReport> exit_suite(const RunConfig& c) {
  const auto& w = c.welltime;
  const well::WellSpec spec{w.beta, w.lambda};
  stats::ReportMetadata meta{w.beta, {w.lambda}, c.seed.value_or(0), config_hash(c)};
  std::vector<TestReport> out;
  auto finish = [&](TestReport r) {
    r.suite = "exit";
    r.metadata = meta;
    out.push_back(std::move(r));
  };

  const auto cp = well::critical_points(spec);
  const double r0 = w.r.value_or(cp.a);
  well::QuadratureSettings qset;
  qset.rel_tol = w.rel_tol;
  {
    TestReport r;
    r.name = "exit_time_asymptotic";
    r.reference = "1";
    r.n = 1;
    r.details["r"] = r0;
    r.details["a"] = cp.a;
    r.details["b"] = cp.b;
    try {
      const auto t = well::expected_exit_time(r0, spec, qset);
      const double ratio = t.value / spec.time_scale();
      r.statistic = ratio;
      r.details["t_physical"] = t.value;
      r.details["est_error"] = t.est_error;
      r.checks.push_back({"rescaled_min", ratio, Comparator::greater_equal, 0.98});
      r.checks.push_back({"rescaled_max", ratio, Comparator::less_equal, 1.02});
    } catch (const well::QuadratureFailure& e) {
      r.statistic = std::nan("");
      r.diagnostic = e.what();
      r.checks.push_back({"converged", 0.0, Comparator::greater, 0.0});
    }
    finish(std::move(r));
  }
  {
    const auto L = well::laplace_g(r0, w.xi, spec, qset);
    const double target = 1.0 / (1.0 + w.xi);
    TestReport r;
    r.name = "laplace_fixed_point";
    r.statistic = L.g.value;
    r.reference = format_double(target);
    r.n = 1;
    r.details["xi"] = w.xi;
    r.details["est_error"] = L.g.est_error;
    r.details["iterations"] = static_cast<double>(L.iterations);
    r.details["lower_bound"] = L.lower_bound;
    r.details["upper_bound"] = L.upper_bound;
    r.checks.push_back({"abs_error", std::abs(L.g.value - target), Comparator::less, 0.02});
    r.checks.push_back({"sandwich_holds", L.sandwich_holds ? 1.0 : 0.0, Comparator::greater, 0.0});
    r.checks.push_back({"converged", L.converged ? 1.0 : 0.0, Comparator::greater, 0.0});
    finish(std::move(r));
  }
  {
    const double theta0 = w.theta0.value_or(well::default_theta0(w.beta));
    well::PassageSettings ps;
    ps.workers = c.workers;
    const auto sample = well::sample_passage_times(spec, theta0, w.samples, c.seed.value(), ps);
    const auto times = sample.rescaled();
    const double n = static_cast<double>(w.samples);
    TestReport ks;
    if (times.size() >= 200 && sample.censored == 0) {
      stats::KsOptions opt;
      opt.margin = w.ks_margin;
      ks = stats::ks_exponential(times, opt);
    } else {
      ks.name = "ks_exponential";
      ks.reference = "exponential(1)";
      ks.n = times.size();
      ks.checks.push_back({"censored", static_cast<double>(sample.censored),
                           Comparator::less_equal, 0.0});
      ks.checks.push_back({"samples", static_cast<double>(times.size()),
                           Comparator::greater_equal, 200.0});
    }
    ks.name = "passage_ks";
    ks.details["theta0"] = theta0;
    ks.details["censored"] = static_cast<double>(sample.censored);
    finish(std::move(ks));

    double mean = 0.0;
    for (double t : times) mean += t;
    mean = times.empty() ? std::nan("") : mean / static_cast<double>(times.size());
    TestReport m;
    m.name = "passage_mean";
    m.statistic = mean;
    m.reference = "1";
    m.n = times.size();
    m.details["theta0"] = theta0;
    m.details["censored"] = static_cast<double>(sample.censored);
    m.details["band"] = 3.0 / std::sqrt(n);
    m.checks.push_back({"abs_error", std::isnan(mean) ? 1e300 : std::abs(mean - 1.0),
                        Comparator::less_equal, 3.0 / std::sqrt(n)});
    finish(std::move(m));
  }
  return out;
}

std::vector<TestReport> independence_suite(const RunConfig& c, const stats::CountTable& table) {
  std::vector<TestReport> out;
  const auto& ivs = c.effective_intervals;
  for (std::size_t i = 0; i < ivs.size(); ++i) {
    for (std::size_t j = i + 1; j < ivs.size(); ++j) {
      if (std::max(ivs[i].lo, ivs[j].lo) < std::min(ivs[i].hi, ivs[j].hi)) continue;
      if (ivs[i].lo == ivs[i].hi || ivs[j].lo == ivs[j].hi) continue;
      TestReport r;
      if (table.joint(i, j).size() >= 1000) {
        r = stats::independence_test(table, i, j);
      } else {
        r.name = "independence";
        r.reference = "0";
        r.n = table.joint(i, j).size();
        r.checks.push_back({"settled_rows", static_cast<double>(r.n), Comparator::greater_equal,
                            1000.0});
        r.diagnostic = "fewer than 1000 rows settled in both intervals";
      }
      r.suite = "independence";
      r.name += interval_label(c.intervals[i]) + interval_label(c.intervals[j]);
      r.metadata = metadata(c);
      out.push_back(std::move(r));
    }
  }
  auto s = settledness(c, table, "independence");
  s.metadata = metadata(c);
  out.push_back(std::move(s));
  return out;
}

std::vector<TestReport> coupling_suite(const RunConfig& c, const Simulation& sim) {
  std::vector<TestReport> out;
  const auto [lo, hi] = coupling_indices(c);
  const double window = stats::default_match_window(c.params.beta);
  const auto d = stats::coupling_diagnostics(sim.results, c.params, lo, hi, window);
  TestReport r;
  r.suite = "coupling";
  r.name = "coupling[" + short_number(c.params.lambdas[lo]) + "," +
           short_number(c.params.lambdas[hi]) + "]";
  r.statistic = d.theta_hat;
  r.reference = "0";
  r.n = sim.results.size();
  r.details["theta_hat"] = d.theta_hat;
  r.details["xi_hat"] = d.xi_hat;
  r.details["inclusion_fraction"] = d.inclusion_fraction;
  r.details["simultaneity_fraction"] = d.simultaneity_fraction;
  r.details["level_jumps"] = static_cast<double>(d.level_jumps);
  r.details["window"] = window;
  const double largest = std::max({d.theta_hat, d.xi_hat, d.inclusion_fraction,
                                   d.simultaneity_fraction});
  const double smallest = std::min({d.theta_hat, d.xi_hat, d.inclusion_fraction,
                                    d.simultaneity_fraction});
  r.checks.push_back({"fractions_max", largest, Comparator::less_equal, 1.0});
  r.checks.push_back({"fractions_min", smallest, Comparator::greater_equal, 0.0});
  r.checks.push_back({"inclusion_fraction", d.inclusion_fraction, Comparator::greater_equal,
                      c.coupling.min_inclusion});
  r.metadata = metadata(c);
  out.push_back(std::move(r));

  if (c.coupling.fast_reach) {
    stats::ReachSettings rs;
    rs.step = c.settings.step;
    rs.workers = c.workers;
    auto f = stats::fast_reach_probe(c.params.beta, c.params.lambdas[lo], c.coupling.reach_epsilon,
                                     c.coupling.reach_samples, c.seed.value(),
                                     c.coupling.reach_min_probability, rs);
    f.suite = "coupling";
    f.name += "[lambda=" + short_number(c.params.lambdas[lo]) + "]";
    f.metadata = metadata(c);
    out.push_back(std::move(f));
  }
  return out;
}

std::map<std::string, bool> suite_verdicts(const std::vector<std::string>& suites,
                                           const std::vector<TestReport>& reports) {
  std::map<std::string, bool> out;
  for (const auto& s : suites) {
    bool any = false, all = true;
    for (const auto& r : reports) {
      if (r.suite != s) continue;
      any = true;
      all = all && r.pass();
    }
    out[s] = any && all;
  }
  return out;
}

namespace {

nlohmann::json interval_json(const std::vector<stats::Interval>& ivs) {
  auto a = nlohmann::json::array();
  for (const auto& iv : ivs) a.push_back({iv.lo, iv.hi});
  return a;
}

void write_manifest(const RunConfig& c, const RunOutcome& outcome,
                    const std::vector<std::string>& files, const sde::ReplicateRequest* req) {
  nlohmann::json m;
  m["schema_version"] = schema_version;
  m["tool_version"] = std::string(tool_version);
  m["timestamp"] = utc_timestamp();
  m["mode"] = to_string(c.mode);
  m["config_hash"] = config_hash(c);
  m["config"] = canonical_json(c);
  m["workers"] = c.workers;
  m["files"] = files;
  m["intervals"] = interval_json(c.intervals);
  m["effective_intervals"] = interval_json(c.effective_intervals);
  if (req) {
    auto procs = nlohmann::json::array();
    const auto& l = req->params.lambdas;
    for (std::size_t i = 0; i < l.size(); ++i) {
      procs.push_back({{"process_id", i}, {"kind", "level"}, {"lambda_lo", 0.0}, {"lambda_hi", l[i]}});
    }
    for (std::size_t p = 0; p < req->tracked_pairs.size(); ++p) {
      const auto [lo, hi] = req->tracked_pairs[p];
      procs.push_back({{"process_id", l.size() + p},
                       {"kind", "difference"},
                       {"lambda_lo", l[lo]},
                       {"lambda_hi", l[hi]}});
    }
    m["processes"] = procs;
  }
  m["suites"] = outcome.suites;
  m["pass"] = outcome.exit_status == 0;
  m["warnings"] = outcome.warnings;
  if (!outcome.path_diagnostics.empty()) m["path_diagnostics"] = outcome.path_diagnostics;
  write_atomic(c.output_dir / "manifest.json", m.dump(2) + "\n");
}

void run_welltime(const RunConfig& c, RunOutcome& outcome, std::vector<std::string>& files,
                  std::ostream& log) {
  const auto& w = c.welltime;
  const well::WellSpec spec{w.beta, w.lambda};
  for (const auto& msg : well::validate(spec)) outcome.warnings.push_back(msg);
  nlohmann::json j;
  j["schema_version"] = schema_version;
  j["beta"] = w.beta;
  j["lambda"] = w.lambda;
  j["method"] = w.method;
  j["time_scale"] = spec.time_scale();
  if (w.method == "quadrature") {
    const auto cp = well::critical_points(spec);
    const double r = w.r.value_or(cp.a);
    well::QuadratureSettings qset;
    qset.rel_tol = w.rel_tol;
    log << "quadrature for t(" << format_double(r) << ")\n";
    const auto t = well::expected_exit_time(r, spec, qset);
    j["r"] = r;
    j["a"] = cp.a;
    j["b"] = cp.b;
    j["t_physical"] = t.value;
    j["t_rescaled"] = t.value / spec.time_scale();
    j["est_error"] = t.est_error;
    j["evaluations"] = t.evaluations;
    const auto L = well::laplace_g(r, w.xi, spec, qset);
    j["laplace"] = {{"xi", w.xi},
                    {"g", L.g.value},
                    {"est_error", L.g.est_error},
                    {"sandwich_holds", L.sandwich_holds},
                    {"converged", L.converged}};
  } else {
    const double theta0 = w.theta0.value_or(well::default_theta0(w.beta));
    well::PassageSettings ps;
    ps.workers = c.workers;
    log << "sampling " << w.samples << " passage times\n";
    const auto s = well::sample_passage_times(spec, theta0, w.samples, c.seed.value(), ps);
    std::string csv = "#schema_version=1\nsample,t_physical,t_rescaled\n";
    std::size_t k = 0;
    for (double t : s.raw_times) {
      csv += std::to_string(k++) + ',' + format_double(t) + ',' + format_double(t * s.rescale) + '\n';
    }
    write_atomic(c.output_dir / "passage.csv", csv);
    files.push_back("passage.csv");
    double mean = 0.0;
    for (double t : s.raw_times) mean += t * s.rescale;
    j["theta0"] = theta0;
    j["samples"] = w.samples;
    j["censored"] = s.censored;
    j["mean_rescaled"] = s.raw_times.empty() ? nlohmann::json(nullptr)
                                             : nlohmann::json(mean / static_cast<double>(s.raw_times.size()));
  }
  write_atomic(c.output_dir / "welltime.json", j.dump(2) + "\n");
  files.push_back("welltime.json");
}

}  // namespace

RunOutcome run(const RunConfig& c, std::ostream& log) {
  RunOutcome outcome;
  std::vector<std::string> files;
  std::filesystem::create_directories(c.output_dir);

  if (c.mode == Mode::welltime) {
    run_welltime(c, outcome, files, log);
    write_manifest(c, outcome, files, nullptr);
    return outcome;
  }
  if (c.mode == Mode::report) {
    throw ConfigError("report mode is handled by aggregate_reports");
  }

  for (const auto& msg : sde::validate(c.params)) outcome.warnings.push_back(msg);
  const bool needs_sim =
      c.mode == Mode::simulate ||
      std::any_of(c.suites.begin(), c.suites.end(), [](const auto& s) { return s != "exit"; });

  std::optional<Simulation> sim;
  std::optional<stats::CountTable> table;
  if (needs_sim) {
    log << "simulating " << c.replicates << " replicates at beta=" << format_double(c.params.beta)
        << " over " << c.settings.step_count(c.params.beta) << " steps each\n";
    sim = simulate(c);
    table = count_table(c, *sim);
    std::size_t aborted = 0;
    for (const auto& r : sim->results) aborted += r.path.aborted ? 1 : 0;
    if (aborted) outcome.warnings.push_back(std::to_string(aborted) + " replicates aborted");
    double worst_decrements = 0.0, violations = 0.0, multi = 0.0, steps = 0.0;
    for (const auto& r : sim->results) {
      if (r.path.steps == 0) continue;
      worst_decrements = std::max(worst_decrements, static_cast<double>(r.path.floor_decrements) /
                                                        static_cast<double>(r.path.steps));
      violations += static_cast<double>(r.path.ordering_violations);
      multi += static_cast<double>(r.path.multi_jumps);
      steps += static_cast<double>(r.path.steps);
    }
    outcome.path_diagnostics["max_floor_decrement_fraction"] = worst_decrements;
    outcome.path_diagnostics["ordering_violation_fraction"] = steps > 0 ? violations / steps : 0.0;
    outcome.path_diagnostics["multi_jump_steps"] = multi;
    outcome.path_diagnostics["aborted_replicates"] = static_cast<double>(aborted);
    if (worst_decrements >= 0.01) {
      outcome.warnings.push_back("floor decrements reach " + format_double(worst_decrements) +
                                 " of steps in some replicate; reduce the step");
    }
    for (std::size_t k = 0; k < table->intervals.size(); ++k) {
      const double f = table->unsettled_fraction(k);
      if (f >= c.max_unsettled_fraction) {
        outcome.warnings.push_back("interval " + std::to_string(k) + " has unsettled fraction " +
                                   format_double(f));
      }
    }
    write_atomic(c.output_dir / "jumps.csv", jumps_csv(c, *sim));
    write_atomic(c.output_dir / "counts.csv", counts_csv(*table));
    files.push_back("jumps.csv");
    files.push_back("counts.csv");
  }

  if (c.mode == Mode::verify) {
    for (const auto& suite : c.suites) {
      log << "suite " << suite << "\n";
      std::vector<TestReport> part;
      if (suite == "marginal") part = marginal_suite(c, *table);
      if (suite == "intensity") part = intensity_suite(c, *sim);
      if (suite == "exit") part = exit_suite(c);
      if (suite == "independence") part = independence_suite(c, *table);
      if (suite == "coupling") part = coupling_suite(c, *sim);
      for (auto& r : part) outcome.reports.push_back(std::move(r));
    }
    outcome.suites = suite_verdicts(c.suites, outcome.reports);
    const bool all_pass = std::all_of(outcome.suites.begin(), outcome.suites.end(),
                                      [](const auto& kv) { return kv.second; });
    outcome.exit_status = all_pass ? 0 : 1;
    write_atomic(c.output_dir / "report.json", report_document(outcome.reports));
    files.push_back("report.json");
  }
  write_manifest(c, outcome, files, sim ? &sim->request : nullptr);
  return outcome;
}

}  // namespace sinebeta::harness

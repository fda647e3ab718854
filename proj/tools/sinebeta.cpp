#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "sinebeta/harness/aggregate.hpp"
#include "sinebeta/harness/config.hpp"
#include "sinebeta/harness/io.hpp"
#include "sinebeta/harness/run.hpp"
#include "sinebeta/stats.hpp"
#include "sinebeta/well.hpp"

namespace hs = sinebeta::harness;

namespace {

struct ModelFlags {
  std::optional<double> beta;
  std::optional<std::string> lambdas, intervals;
  std::optional<std::uint64_t> replicates, seed;
  std::optional<double> step, horizon;
};

void add_model_flags(CLI::App* app, ModelFlags& f) {
  app->add_option("--beta", f.beta, "Inverse temperature");
  app->add_option("--lambdas", f.lambdas, "Lambda grid, e.g. 0,2pi,4pi");
  app->add_option("--intervals", f.intervals, "Count intervals, e.g. 0:2pi,4pi:6pi");
  app->add_option("--replicates", f.replicates, "Number of replicates");
  app->add_option("--step", f.step, "Euler step (physical time)");
  app->add_option("--horizon", f.horizon, "Horizon in rescaled time units");
}

void copy_model_flags(const ModelFlags& f, hs::Overrides& o) {
  o.beta = f.beta;
  o.lambdas = f.lambdas;
  o.intervals = f.intervals;
  o.replicates = f.replicates;
  o.step = f.step;
  o.horizon = f.horizon;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coupled sine-beta simulation, exit-time quadrature and verification suites"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(hs::tool_version));

  std::optional<std::string> config_file, output_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  auto common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_file, "YAML config file; flags override it");
    sub->add_option("-o,--output", output_dir, "Output directory (env SINEBETA_OUTPUT_DIR wins)");
    sub->add_option("--seed", seed, "Master seed (required for anything random)");
    sub->add_option("--workers", workers, "OpenMP threads; 0 uses the default");
  };

  ModelFlags sim_flags, verify_flags;
  auto* simulate = app.add_subcommand("simulate", "Simulate replicates and write jumps.csv and counts.csv");
  common(simulate);
  add_model_flags(simulate, sim_flags);

  std::optional<std::string> method;
  std::optional<double> w_beta, w_lambda, w_xi;
  std::optional<std::string> w_r, w_theta0;
  std::optional<std::size_t> w_samples;
  auto* welltime = app.add_subcommand("welltime", "Mean exit time by quadrature or passage times by Monte Carlo");
  common(welltime);
  welltime->add_option("method", method, "quadrature | mc")->check(CLI::IsMember({"quadrature", "mc"}));
  welltime->add_option("--beta", w_beta, "Inverse temperature");
  welltime->add_option("--lambda", w_lambda, "Speed lambda");
  welltime->add_option("--r", w_r, "Start in the potential coordinate (default: well bottom)");
  welltime->add_option("--theta0", w_theta0, "Passage start angle (default 4 arctan(beta^(1/4)))");
  welltime->add_option("--samples", w_samples, "Number of passage paths");
  welltime->add_option("--xi", w_xi, "Laplace variable for the fixed-point check");

  std::optional<std::string> suites;
  auto* verify = app.add_subcommand("verify", "Run verification suites and write report.json");
  common(verify);
  add_model_flags(verify, verify_flags);
  verify->add_option("--suite", suites,
                     "marginal, intensity, exit, independence, coupling or all (comma separated)");

  std::string report_dir;
  auto* report = app.add_subcommand("report", "Aggregate every report.json below a directory");
  report->add_option("dir", report_dir, "Directory to scan")->required();
  std::optional<std::string> summary_out;
  report->add_option("--json", summary_out, "Also write the JSON summary to this file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (report->parsed()) {
      const auto agg = hs::aggregate_reports(report_dir);
      std::cout << agg.text;
      for (const auto& w : agg.warnings) std::cerr << "warning: " << w << "\n";
      if (summary_out) hs::write_atomic(*summary_out, agg.json.dump(2) + "\n");
      return agg.exit_status;
    }

    hs::Overrides o;
    o.seed = seed;
    o.output_dir = output_dir;
    o.workers = workers;
    if (simulate->parsed()) {
      o.mode = hs::Mode::simulate;
      copy_model_flags(sim_flags, o);
    } else if (welltime->parsed()) {
      o.mode = hs::Mode::welltime;
      o.welltime_method = method;
      o.welltime_beta = w_beta;
      o.welltime_lambda = w_lambda;
      o.welltime_r = w_r;
      o.welltime_theta0 = w_theta0;
      o.welltime_samples = w_samples;
      o.welltime_xi = w_xi;
    } else {
      o.mode = hs::Mode::verify;
      copy_model_flags(verify_flags, o);
      o.suites = suites;
    }
    std::optional<std::filesystem::path> file;
    if (config_file) file = *config_file;
    const auto config = hs::load_config(file, o);
    const auto outcome = hs::run(config, std::cerr);
    for (const auto& w : outcome.warnings) std::cerr << "warning: " << w << "\n";
    for (const auto& r : outcome.reports) {
      std::cout << (r.pass() ? "PASS " : "FAIL ") << r.suite << "/" << r.name
                << " statistic=" << hs::format_double(r.statistic);
      if (r.p_value) std::cout << " p=" << hs::format_double(*r.p_value);
      if (!r.diagnostic.empty()) std::cout << " (" << r.diagnostic << ")";
      std::cout << "\n";
    }
    for (const auto& [suite, pass] : outcome.suites) {
      std::cout << "suite " << suite << ": " << (pass ? "pass" : "fail") << "\n";
    }
    std::cerr << "artifacts in " << config.output_dir.string() << "\n";
    return outcome.exit_status;
  } catch (const hs::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const sinebeta::stats::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}

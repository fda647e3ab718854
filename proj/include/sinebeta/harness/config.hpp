#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sinebeta/sde.hpp"
#include "sinebeta/stats.hpp"

namespace sinebeta::harness {

enum class Mode { simulate, welltime, verify, report };

std::string to_string(Mode m);
Mode parse_mode(const std::string& s);

inline const std::vector<std::string> all_suites = {"marginal", "intensity", "exit",
                                                    "independence", "coupling"};

struct WelltimeConfig {
  std::string method = "quadrature";  // quadrature | mc
  double beta = 1e-3;
  double lambda = 1.0;
  std::optional<double> r;       // start in the potential coordinate; default a
  std::optional<double> theta0;  // passage start; default 4 arctan(beta^{1/4})
  std::size_t samples = 1000;
  double xi = 1.0;
  double ks_margin = 0.05;
  double rel_tol = 1e-8;
};

struct CouplingConfig {
  std::optional<std::pair<double, double>> pair;  // default: first two positive lambdas
  double min_inclusion = 0.95;
  bool fast_reach = false;
  double reach_epsilon = 0.5;
  std::size_t reach_samples = 1000;
  double reach_min_probability = 0.95;
};

struct RunConfig {
  Mode mode = Mode::simulate;
  sde::ModelParams params;        // grid after translation and completion
  sde::IntegratorSettings settings;
  std::vector<stats::Interval> intervals;            // as requested
  std::vector<stats::Interval> effective_intervals;  // translated to lo >= 0
  std::uint64_t replicates = 0;
  std::optional<std::uint64_t> seed;
  std::filesystem::path output_dir = "sinebeta-out";
  std::vector<std::string> suites;
  int workers = 0;
  std::size_t checkpoints = 5;
  double max_tv = 0.06;
  double intensity_tolerance = 0.05;
  double max_unsettled_fraction = 0.02;
  WelltimeConfig welltime;
  CouplingConfig coupling;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// "2pi", "-1.5pi", "0.5*pi", "pi", or a plain number.
double parse_real(const std::string& token);
/// "0:2pi,4pi:6pi".
std::vector<stats::Interval> parse_intervals(const std::string& text);
/// "0,2pi,4pi".
std::vector<double> parse_reals(const std::string& text);

/// Flag values that override file values; unset fields leave the file alone.
struct Overrides {
  std::optional<Mode> mode;
  std::optional<double> beta;
  std::optional<std::string> lambdas;
  std::optional<std::string> intervals;
  std::optional<std::uint64_t> replicates;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output_dir;
  std::optional<std::string> suites;
  std::optional<int> workers;
  std::optional<double> step;
  std::optional<double> horizon;
  std::optional<std::string> welltime_method;
  std::optional<double> welltime_beta;
  std::optional<double> welltime_lambda;
  std::optional<std::string> welltime_r;
  std::optional<std::string> welltime_theta0;
  std::optional<std::size_t> welltime_samples;
  std::optional<double> welltime_xi;
};

/// Builds a config from an optional YAML file, then the overrides, then the
/// SINEBETA_OUTPUT_DIR environment variable, and validates it. Every problem
/// is reported in one ConfigError.
RunConfig load_config(const std::optional<std::filesystem::path>& file,
                      const Overrides& overrides);

/// Completes the lambda grid, translates intervals and checks every
/// invariant. Called by load_config; exposed for configs built in code.
void finalize(RunConfig& config);

/// Canonical JSON of everything that determines the results (output
/// directory and worker count excluded). Keys are sorted.
nlohmann::json canonical_json(const RunConfig& config);

/// FNV-1a 64 of the canonical JSON, as 16 hex digits.
std::string config_hash(const RunConfig& config);

}  // namespace sinebeta::harness

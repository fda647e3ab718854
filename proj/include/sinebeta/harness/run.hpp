#pragma once

#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "sinebeta/harness/config.hpp"
#include "sinebeta/sde.hpp"
#include "sinebeta/stats.hpp"

namespace sinebeta::harness {

struct Simulation {
  sde::ReplicateRequest request;
  std::vector<sde::ReplicateResult> results;  // replicate order
};

/// The replicate request implied by the config: intervals with a positive
/// lower end and the coupling pair become tracked differences.
sde::ReplicateRequest replicate_request(const RunConfig& config);

Simulation simulate(const RunConfig& config);

/// Index of every interval's process, or nullopt for empty intervals.
stats::CountTable count_table(const RunConfig& config, const Simulation& sim);

/// jumps.csv: replicate,process_id,kind,t_physical,t_rescaled,count_after.
std::string jumps_csv(const RunConfig& config, const Simulation& sim);
/// counts.csv: replicate,interval_id,count,unsettled_flag.
std::string counts_csv(const stats::CountTable& table);

std::vector<stats::TestReport> marginal_suite(const RunConfig& config,
                                              const stats::CountTable& table);
std::vector<stats::TestReport> intensity_suite(const RunConfig& config,
                                               const Simulation& sim);
std::vector<stats::TestReport> exit_suite(const RunConfig& config);
std::vector<stats::TestReport> independence_suite(const RunConfig& config,
                                                  const stats::CountTable& table);
std::vector<stats::TestReport> coupling_suite(const RunConfig& config,
                                              const Simulation& sim);

/// Per-suite verdicts: a suite passes when it produced records and all pass.
std::map<std::string, bool> suite_verdicts(const std::vector<std::string>& suites,
                                           const std::vector<stats::TestReport>& reports);

struct RunOutcome {
  int exit_status = 0;
  std::vector<stats::TestReport> reports;
  std::map<std::string, bool> suites;
  std::vector<std::string> warnings;
  // Integrator health over all replicates; empty when nothing was simulated.
  std::map<std::string, double> path_diagnostics;
};

/// Executes a finalized config and writes its artifacts into
/// config.output_dir. Progress goes to `log`.
RunOutcome run(const RunConfig& config, std::ostream& log);

}  // namespace sinebeta::harness

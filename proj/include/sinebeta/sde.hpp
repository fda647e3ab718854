#pragma once

// Coupled stochastic sine equations
//
//   d alpha_l = l (beta/4) exp(-beta t / 4) dt + Re((exp(-i alpha_l) - 1) dZ_t),
//   alpha_l(0) = 0,
//
// integrated for a grid of angular speeds l with one shared complex Brownian
// motion Z = X + iY. Expanding the real part gives the noise term
// (cos alpha - 1) dX + sin(alpha) dY, which is what couples the family.

#include <cstddef>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sinebeta::sde {

inline constexpr double two_pi = 2.0 * std::numbers::pi;

struct ModelParams {
  double beta = 1.0;
  std::vector<double> lambdas;  // strictly ascending, all >= 0
};

/// Throws std::invalid_argument on hard violations; returns soft warnings
/// (beta outside the recommended range (0, 4]).
std::vector<std::string> validate(const ModelParams& params);

struct IntegratorSettings {
  double step = 0.01;             // physical time units
  double horizon_rescaled = 3.0;  // physical horizon is (8 pi / beta) * this
  double settle_band = 0.1;       // endpoint residue band, in (0, pi)

  double physical_horizon(double beta) const;
  std::uint64_t step_count(double beta) const;
};

void validate(const IntegratorSettings& settings);

struct FamilyState {
  double t = 0.0;
  std::vector<double> alphas;
};

/// Real and imaginary parts of one increment of Z; each has variance h.
struct NoiseIncrements {
  double dx = 0.0;
  double dy = 0.0;
};

/// Raised when an Euler step produces a non-finite angle.
class NonFiniteStateError : public std::runtime_error {
 public:
  NonFiniteStateError(double t, std::size_t index);
  double time() const noexcept { return t_; }
  std::size_t index() const noexcept { return index_; }

 private:
  double t_;
  std::size_t index_;
};

/// lambda (beta/4) exp(-beta t/4).
double drift(double lambda, double beta, double t);

/// x - 2 pi floor(x / 2 pi), in [0, 2 pi).
double wrap_2pi(double x);

/// One Euler-Maruyama step of the whole family. Every lambda consumes the
/// same (dx, dy).
FamilyState step_family(FamilyState state, NoiseIncrements noise,
                        const ModelParams& params, double h);

enum class ProcessKind { level, difference };

/// A tracked process: either alpha_{lambdas[hi]} (level, lo unused) or the
/// difference alpha_{lambdas[hi]} - alpha_{lambdas[lo]}.
struct ProcessId {
  ProcessKind kind = ProcessKind::level;
  std::size_t lo = 0;
  std::size_t hi = 0;

  friend bool operator==(const ProcessId&, const ProcessId&) = default;
};

struct ProcessJumps {
  ProcessId id;
  std::vector<double> jump_times;   // physical, nondecreasing
  std::int64_t running_count = 0;   // == jump_times.size()
  std::int64_t endpoint_count = 0;  // nearest integer of p(T) / 2 pi
  double endpoint_residue = 0.0;    // wrap_2pi(p(T))
  bool unsettled = false;           // residue inside [band, 2 pi - band]
  bool count_mismatch = false;      // endpoint_count != running_count
};

/// Process order: one level entry per lambda (index i is lambda i), then one
/// difference entry per tracked pair in request order.
struct JumpLedger {
  std::vector<ProcessJumps> processes;

  const ProcessJumps* find(const ProcessId& id) const;
};

struct PathSummary {
  std::uint64_t steps = 0;
  std::uint64_t floor_decrements = 0;     // raw floor drops, all processes
  std::uint64_t ordering_violations = 0;  // steps with some alpha_{i+1} < alpha_i
  std::uint64_t multi_jumps = 0;          // floor advanced by >= 2 in one step
  // Per tracked pair: steps with wrap(alpha_hi) < wrap(alpha_lo).
  std::vector<std::uint64_t> below_steps;
  // Per lambda: steps with wrap(alpha) >= 4 arctan(beta^{1/4}).
  std::vector<std::uint64_t> far_from_zero_steps;
  std::vector<double> final_alphas;
  // checkpoint_alphas[c][i] = alpha_{lambda_i} at the c-th requested time.
  std::vector<std::vector<double>> checkpoint_alphas;
  bool aborted = false;
  double abort_time = 0.0;
  std::string abort_reason;
};

struct ReplicateResult {
  std::uint64_t replicate = 0;
  JumpLedger ledger;
  PathSummary path;
};

using IndexPair = std::pair<std::size_t, std::size_t>;

struct ReplicateRequest {
  ModelParams params;
  IntegratorSettings settings;
  std::vector<IndexPair> tracked_pairs;  // (lo, hi) with lo < hi
  std::vector<double> checkpoints;       // physical times, ascending
};

void validate(const ReplicateRequest& request);

/// Runs one replicate from alpha = 0 to the physical horizon with the noise
/// substream `key`. Deterministic in (request, key). A non-finite state stops
/// the run and is reported through PathSummary::aborted.
ReplicateResult simulate_replicate(const ReplicateRequest& request,
                                   std::uint64_t key,
                                   std::uint64_t replicate_index = 0);

/// lambda (beta/4) int_0^t exp(-beta s/4) ds = lambda (1 - exp(-beta t/4)).
double mean_alpha_exact(double lambda, double beta, double t);

struct MeanCurve {
  std::vector<double> times;
  // means[c][i], std_errors[c][i]: checkpoint c, lambda i.
  std::vector<std::vector<double>> means;
  std::vector<std::vector<double>> std_errors;
  std::size_t replicates = 0;
};

/// Empirical E[alpha_lambda(t)] at the checkpoints over `replicates` runs.
/// Half-width of a 95% interval is 1.96 * std_error.
MeanCurve mean_alpha(const ModelParams& params,
                     const IntegratorSettings& settings,
                     std::vector<double> checkpoints, std::size_t replicates,
                     std::uint64_t master_seed, int workers = 0);

}  // namespace sinebeta::sde

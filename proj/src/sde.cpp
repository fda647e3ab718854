#include "sinebeta/sde.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "sinebeta/rng.hpp"

namespace sinebeta::sde {

namespace {

bool finite_positive(double x) { return std::isfinite(x) && x > 0.0; }

}  // namespace

std::vector<std::string> validate(const ModelParams& params) {
  if (!finite_positive(params.beta)) {
    throw std::invalid_argument("beta must be a positive finite number");
  }
  if (params.lambdas.empty()) {
    throw std::invalid_argument("lambda grid must not be empty");
  }
  for (std::size_t i = 0; i < params.lambdas.size(); ++i) {
    const double l = params.lambdas[i];
    if (!std::isfinite(l) || l < 0.0) {
      throw std::invalid_argument(
          "lambda grid entries must be finite and >= 0 (translate negative "
          "intervals before simulating)");
    }
    if (i > 0 && !(l > params.lambdas[i - 1])) {
      throw std::invalid_argument("lambda grid must be strictly ascending");
    }
  }
  std::vector<std::string> warnings;
  if (params.beta > 4.0) {
    std::ostringstream os;
    os << "beta = " << params.beta
       << " is outside the recommended range (0, 4]";
    warnings.push_back(os.str());
  }
  return warnings;
}

double IntegratorSettings::physical_horizon(double beta) const {
  return 8.0 * std::numbers::pi / beta * horizon_rescaled;
}

std::uint64_t IntegratorSettings::step_count(double beta) const {
  return static_cast<std::uint64_t>(
      std::ceil(physical_horizon(beta) / step - 1e-9));
}

void validate(const IntegratorSettings& settings) {
  if (!finite_positive(settings.step) || settings.step > 0.05) {
    throw std::invalid_argument("integrator step must lie in (0, 0.05]");
  }
  if (!std::isfinite(settings.horizon_rescaled) ||
      settings.horizon_rescaled < 3.0) {
    throw std::invalid_argument("rescaled horizon must be >= 3");
  }
  if (!(settings.settle_band > 0.0 && settings.settle_band < std::numbers::pi)) {
    throw std::invalid_argument("settle band must lie in (0, pi)");
  }
}

NonFiniteStateError::NonFiniteStateError(double t, std::size_t index)
    : std::runtime_error("non-finite angle at t = " + std::to_string(t) +
                         " (lambda index " + std::to_string(index) +
                         "); the step is too large"),
      t_(t),
      index_(index) {}

double drift(double lambda, double beta, double t) {
  return lambda * (beta / 4.0) * std::exp(-beta * t / 4.0);
}

double wrap_2pi(double x) {
  double r = x - two_pi * std::floor(x / two_pi);
  // floor rounding can leave r == 2 pi for tiny negative x
  if (r >= two_pi) r -= two_pi;
  if (r < 0.0) r = 0.0;
  return r;
}

FamilyState step_family(FamilyState state, NoiseIncrements noise,
                        const ModelParams& params, double h) {
  if (state.alphas.size() != params.lambdas.size()) {
    throw std::invalid_argument("state and lambda grid sizes differ");
  }
  const double decay = (params.beta / 4.0) * std::exp(-params.beta * state.t / 4.0);
  for (std::size_t i = 0; i < state.alphas.size(); ++i) {
    const double a = state.alphas[i];
    const double next = a + params.lambdas[i] * decay * h +
                        (std::cos(a) - 1.0) * noise.dx + std::sin(a) * noise.dy;
    if (!std::isfinite(next)) throw NonFiniteStateError(state.t, i);
    state.alphas[i] = next;
  }
  state.t += h;
  return state;
}

const ProcessJumps* JumpLedger::find(const ProcessId& id) const {
  for (const auto& p : processes) {
    if (p.id == id) return &p;
  }
  return nullptr;
}

void validate(const ReplicateRequest& request) {
  validate(request.params);
  validate(request.settings);
  const std::size_t m = request.params.lambdas.size();
  for (const auto& [lo, hi] : request.tracked_pairs) {
    if (lo >= hi || hi >= m) {
      throw std::invalid_argument(
          "tracked pair indices must satisfy lo < hi < grid size");
    }
  }
  if (!std::is_sorted(request.checkpoints.begin(), request.checkpoints.end())) {
    throw std::invalid_argument("checkpoints must be ascending");
  }
  for (double c : request.checkpoints) {
    if (!(c >= 0.0)) throw std::invalid_argument("checkpoints must be >= 0");
  }
}

ReplicateResult simulate_replicate(const ReplicateRequest& request,
                                   std::uint64_t key,
                                   std::uint64_t replicate_index) {
  const auto& params = request.params;
  const auto& settings = request.settings;
  const std::vector<double>& lambdas = params.lambdas;
  const std::size_t m = lambdas.size();
  const std::size_t q = request.tracked_pairs.size();
  const std::size_t np = m + q;
  const double beta = params.beta;
  const double h = settings.step;
  const double sqrt_h = std::sqrt(h);
  const std::uint64_t n = settings.step_count(beta);
  const double far_threshold = 4.0 * std::atan(std::pow(beta, 0.25));
  constexpr double inv_two_pi = 1.0 / two_pi;

  ReplicateResult out;
  out.replicate = replicate_index;
  auto& procs = out.ledger.processes;
  procs.resize(np);
  for (std::size_t i = 0; i < m; ++i) {
    procs[i].id = {ProcessKind::level, 0, i};
  }
  for (std::size_t k = 0; k < q; ++k) {
    const auto [lo, hi] = request.tracked_pairs[k];
    procs[m + k].id = {ProcessKind::difference, lo, hi};
  }

  PathSummary& path = out.path;
  path.below_steps.assign(q, 0);
  path.far_from_zero_steps.assign(m, 0);

  std::vector<double> alpha(m, 0.0);
  std::vector<double> lambda_h(m);
  for (std::size_t i = 0; i < m; ++i) lambda_h[i] = lambdas[i] * h;
  std::vector<double> value(np, 0.0);
  std::vector<double> wrapped(m, 0.0);
  std::vector<std::int64_t> floor_now(np, 0);
  std::vector<std::int64_t> running_max(np, 0);

  std::vector<std::uint64_t> checkpoint_steps;
  checkpoint_steps.reserve(request.checkpoints.size());
  for (double c : request.checkpoints) {
    checkpoint_steps.push_back(static_cast<std::uint64_t>(std::llround(c / h)));
  }
  std::size_t next_checkpoint = 0;
  auto record_checkpoints = [&](std::uint64_t steps_done) {
    while (next_checkpoint < checkpoint_steps.size() &&
           checkpoint_steps[next_checkpoint] <= steps_done) {
      path.checkpoint_alphas.push_back(alpha);
      ++next_checkpoint;
    }
  };
  record_checkpoints(0);

  NormalStream normal(key);
  std::uint64_t k = 0;
  for (; k < n; ++k) {
    const double t = static_cast<double>(k) * h;
    const double decay = (beta / 4.0) * std::exp(-beta * t / 4.0);
    const double dx = sqrt_h * normal();
    const double dy = sqrt_h * normal();

    bool finite = true;
    for (std::size_t i = 0; i < m; ++i) {
      const double a = alpha[i];
      const double next =
          a + lambda_h[i] * decay + (std::cos(a) - 1.0) * dx + std::sin(a) * dy;
      finite = finite && std::isfinite(next);
      alpha[i] = next;
    }
    if (!finite) {
      path.aborted = true;
      path.abort_time = t;
      path.abort_reason = "non-finite angle after step; the step is too large";
      break;
    }

    for (std::size_t i = 0; i + 1 < m; ++i) {
      if (alpha[i + 1] < alpha[i]) {
        ++path.ordering_violations;
        break;
      }
    }

    const double t_mid = t + 0.5 * h;
    for (std::size_t j = 0; j < np; ++j) {
      double v;
      if (j < m) {
        v = alpha[j];
      } else {
        const auto [lo, hi] = request.tracked_pairs[j - m];
        v = alpha[hi] - alpha[lo];
      }
      value[j] = v;
      const auto f = static_cast<std::int64_t>(std::floor(v * inv_two_pi));
      if (f < floor_now[j]) ++path.floor_decrements;
      floor_now[j] = f;
      if (f > running_max[j]) {
        const std::int64_t advance = f - running_max[j];
        if (advance >= 2) ++path.multi_jumps;
        for (std::int64_t r = 0; r < advance; ++r) {
          procs[j].jump_times.push_back(t_mid);
        }
        running_max[j] = f;
      }
      if (j < m) {
        const double w = v - two_pi * static_cast<double>(f);
        wrapped[j] = w;
        if (w >= far_threshold) ++path.far_from_zero_steps[j];
      }
    }
    for (std::size_t p = 0; p < q; ++p) {
      const auto [lo, hi] = request.tracked_pairs[p];
      if (wrapped[hi] < wrapped[lo]) ++path.below_steps[p];
    }
    record_checkpoints(k + 1);
  }
  path.steps = k;
  path.final_alphas = alpha;

  for (std::size_t j = 0; j < np; ++j) {
    ProcessJumps& pj = procs[j];
    pj.running_count = running_max[j];
    pj.endpoint_count = std::llround(value[j] * inv_two_pi);
    pj.endpoint_residue = wrap_2pi(value[j]);
    pj.unsettled = pj.endpoint_residue >= settings.settle_band &&
                   pj.endpoint_residue <= two_pi - settings.settle_band;
    pj.count_mismatch = pj.endpoint_count != pj.running_count;
  }
  return out;
}

double mean_alpha_exact(double lambda, double beta, double t) {
  return lambda * -std::expm1(-beta * t / 4.0);
}

}  // namespace sinebeta::sde

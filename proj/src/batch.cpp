#include "sinebeta/batch.hpp"

#include <cmath>
#include <exception>
#include <stdexcept>

#include <omp.h>

#include "sinebeta/rng.hpp"

namespace sinebeta::sde {

std::vector<ReplicateResult> simulate_batch(const BatchRequest& request,
                                            int workers) {
  validate(request.replicate);
  const auto count = static_cast<std::int64_t>(request.count);
  std::vector<ReplicateResult> results(request.count);
  const int threads = workers > 0 ? workers : omp_get_max_threads();

  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
  for (std::int64_t i = 0; i < count; ++i) {
    try {
      const std::uint64_t rep = request.first_replicate + static_cast<std::uint64_t>(i);
      results[static_cast<std::size_t>(i)] = simulate_replicate(
          request.replicate, substream_key(request.master_seed, rep), rep);
    } catch (...) {
#pragma omp critical(sinebeta_batch_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return results;
}

std::vector<ReplicateResult> simulate_batch_serial(const BatchRequest& request) {
  validate(request.replicate);
  std::vector<ReplicateResult> results;
  results.reserve(request.count);
  for (std::uint64_t i = 0; i < request.count; ++i) {
    const std::uint64_t rep = request.first_replicate + i;
    results.push_back(simulate_replicate(
        request.replicate, substream_key(request.master_seed, rep), rep));
  }
  return results;
}

MeanCurve mean_alpha(const ModelParams& params,
                     const IntegratorSettings& settings,
                     std::vector<double> checkpoints, std::size_t replicates,
                     std::uint64_t master_seed, int workers) {
  if (replicates < 100) {
    throw std::invalid_argument("mean_alpha needs at least 100 replicates");
  }
  BatchRequest req;
  req.replicate.params = params;
  req.replicate.settings = settings;
  req.replicate.checkpoints = checkpoints;
  req.master_seed = master_seed;
  req.count = replicates;
  const double horizon = settings.physical_horizon(params.beta);
  for (double c : checkpoints) {
    if (c > horizon) {
      throw std::invalid_argument("checkpoint beyond the simulated horizon");
    }
  }
  const auto results = simulate_batch(req, workers);

  const std::size_t m = params.lambdas.size();
  const std::size_t nc = checkpoints.size();
  MeanCurve curve;
  curve.times = std::move(checkpoints);
  curve.means.assign(nc, std::vector<double>(m, 0.0));
  curve.std_errors.assign(nc, std::vector<double>(m, 0.0));

  // Welford per (checkpoint, lambda), merged in replicate order.
  std::vector<std::vector<double>> m2(nc, std::vector<double>(m, 0.0));
  std::size_t used = 0;
  for (const auto& r : results) {
    if (r.path.aborted || r.path.checkpoint_alphas.size() != nc) continue;
    ++used;
    for (std::size_t c = 0; c < nc; ++c) {
      for (std::size_t i = 0; i < m; ++i) {
        const double x = r.path.checkpoint_alphas[c][i];
        const double d = x - curve.means[c][i];
        curve.means[c][i] += d / static_cast<double>(used);
        m2[c][i] += d * (x - curve.means[c][i]);
      }
    }
  }
  curve.replicates = used;
  if (used > 1) {
    for (std::size_t c = 0; c < nc; ++c) {
      for (std::size_t i = 0; i < m; ++i) {
        const double var = m2[c][i] / static_cast<double>(used - 1);
        curve.std_errors[c][i] = std::sqrt(var / static_cast<double>(used));
      }
    }
  }
  return curve;
}

}  // namespace sinebeta::sde

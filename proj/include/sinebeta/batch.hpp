#pragma once

// Replicate-parallel drivers. The OpenMP kernel and the serial reference
// must return identical results: every replicate draws from its own
// substream and results are stored by replicate index.

#include <cstdint>
#include <vector>

#include "sinebeta/sde.hpp"

namespace sinebeta::sde {

struct BatchRequest {
  ReplicateRequest replicate;
  std::uint64_t master_seed = 0;
  std::uint64_t first_replicate = 0;
  std::uint64_t count = 0;
};

/// OpenMP over replicates. workers <= 0 uses the OpenMP default.
std::vector<ReplicateResult> simulate_batch(const BatchRequest& request,
                                            int workers = 0);

/// Plain loop; kept as the reference for the parallel kernel.
std::vector<ReplicateResult> simulate_batch_serial(const BatchRequest& request);

}  // namespace sinebeta::sde

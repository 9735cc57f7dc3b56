#pragma once

#include <atomic>

namespace coloseo {

// Process-wide diagnostic counters. All are monotonically increasing;
// reset_counters() is meant for tests and command startup.
struct Counters {
  std::atomic<long> zero_norm_cosine{0};      // cosine_sim saw a zero-norm input
  std::atomic<long> skipped_anchors{0};       // contrastive anchor had no positive in batch
  std::atomic<long> empty_cross_batches{0};   // loss_cross called with no accepted target
  std::atomic<long> label_contract_violations{0};  // target ground truth touched on a training path
  std::atomic<long> os_star_excluded{0};      // shared class absent from an eval target
};

Counters& counters();
void reset_counters();

}  // namespace coloseo

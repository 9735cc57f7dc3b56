#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace coloseo {

// Finite-difference verification of the reverse-mode gradients, run through
// the full network on small dimensions. Each checked loss is evaluated as a
// function of the flat parameter vector; central differences at `step` are
// compared coordinate-by-coordinate against the tape gradients with
//   rel_err = |g_ad - g_fd| / max(1, |g_ad|, |g_fd|).
// Coordinates whose +/-step evaluations land on different discrete branches
// (a relu flipped, a triplet hinge crossed, a degenerate cosine appeared) are
// skipped: the loss is not differentiable there and central differences are
// meaningless. Skips are counted and reported.
struct GradCheckItem {
  std::string loss_name;
  int configs = 0;
  long checked = 0;
  long skipped_kinks = 0;
  double max_rel_err = 0.0;
  std::string worst_coord;
  bool pass = false;
};

struct GradCheckReport {
  std::vector<GradCheckItem> items;
  double tolerance = 1e-4;
  bool passed() const;
  std::string summary() const;  // one line per loss
};

// fault_injection perturbs one analytic gradient coordinate per loss before
// comparison; it exists so the failure path of the harness is testable.
GradCheckReport run_gradcheck(std::uint64_t seed, int configs_per_loss = 20,
                              double step = 1e-5, double tolerance = 1e-4,
                              bool fault_injection = false);

}  // namespace coloseo

#include "coloseo/diagnostics.hpp"

namespace coloseo {

Counters& counters() {
  static Counters c;
  return c;
}

void reset_counters() {
  Counters& c = counters();
  c.zero_norm_cosine = 0;
  c.skipped_anchors = 0;
  c.empty_cross_batches = 0;
  c.label_contract_violations = 0;
  c.os_star_excluded = 0;
}

}  // namespace coloseo

#include "coloseo/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "coloseo/diagnostics.hpp"

namespace coloseo {

void ContrastiveConfig::validate() const {
  if (tau <= 0.0) throw std::invalid_argument("contrastive config: tau must be > 0");
  if (alpha < 0.0) throw std::invalid_argument("contrastive config: alpha must be >= 0");
  if (lambda < 0.0) throw std::invalid_argument("contrastive config: lambda must be >= 0");
}

double cosine_sim(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw std::invalid_argument("cosine_sim: dimension mismatch");
  double uu = 0.0, vv = 0.0, uv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    uu += u[i] * u[i];
    vv += v[i] * v[i];
    uv += u[i] * v[i];
  }
  if (uu == 0.0 || vv == 0.0) {
    counters().zero_norm_cosine++;
    return 0.0;
  }
  return uv / std::sqrt(uu * vv);
}

namespace {

// Pairwise sims scaled by 1/tau over one pool of views; symmetric pairs share
// a node.
std::vector<std::vector<NodeId>> scaled_sims(Tape& tape, std::span<const NodeId> views,
                                             double tau) {
  const int n = static_cast<int>(views.size());
  std::vector<std::vector<NodeId>> s(n, std::vector<NodeId>(n, -1));
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const NodeId sim = tape.scale(tape.cosine(views[i], views[j]), 1.0 / tau);
      s[i][j] = sim;
      s[j][i] = sim;
    }
  }
  return s;
}

// L_i = LSE(candidates) - mean(positives); both spans hold scaled-sim nodes.
NodeId anchor_term(Tape& tape, std::span<const NodeId> candidates,
                   std::span<const NodeId> positives) {
  const NodeId denom = tape.logsumexp(tape.stack(candidates));
  const NodeId pos = tape.mean(positives);
  return tape.sub(denom, pos);
}

}  // namespace

NodeId loss_sup_node(Tape& tape, std::span<const NodeId> z_views,
                     std::span<const int> labels, double tau) {
  if (tau <= 0.0) throw std::invalid_argument("loss_sup: tau must be > 0");
  if (z_views.size() != labels.size()) {
    throw std::invalid_argument("loss_sup: views/labels size mismatch");
  }
  const int n = static_cast<int>(z_views.size());
  if (n < 2) throw std::invalid_argument("loss_sup: need at least 2 views");

  const auto sims = scaled_sims(tape, z_views, tau);
  std::vector<NodeId> anchor_losses;
  std::vector<NodeId> candidates, positives;
  for (int i = 0; i < n; ++i) {
    candidates.clear();
    positives.clear();
    for (int k = 0; k < n; ++k) {
      if (k == i) continue;
      candidates.push_back(sims[i][k]);
      if (labels[k] == labels[i]) positives.push_back(sims[i][k]);
    }
    if (positives.empty()) {
      counters().skipped_anchors++;
      continue;
    }
    anchor_losses.push_back(anchor_term(tape, candidates, positives));
  }
  if (anchor_losses.empty()) return tape.scalar_leaf(0.0);
  return tape.mean(anchor_losses);
}

NodeId loss_aug_node(Tape& tape, std::span<const NodeId> z,
                     std::span<const NodeId> z_tilde, double tau) {
  if (tau <= 0.0) throw std::invalid_argument("loss_aug: tau must be > 0");
  if (z.size() != z_tilde.size()) throw std::invalid_argument("loss_aug: view count mismatch");
  const int b = static_cast<int>(z.size());
  if (b < 1) throw std::invalid_argument("loss_aug: need at least 1 sample");

  std::vector<NodeId> pool(z.begin(), z.end());
  pool.insert(pool.end(), z_tilde.begin(), z_tilde.end());
  const int n = 2 * b;
  const auto sims = scaled_sims(tape, pool, tau);

  std::vector<NodeId> anchor_losses;
  std::vector<NodeId> candidates;
  for (int i = 0; i < n; ++i) {
    const int pos = i < b ? i + b : i - b;  // the sibling view
    candidates.clear();
    for (int k = 0; k < n; ++k) {
      if (k != i) candidates.push_back(sims[i][k]);
    }
    const NodeId positives[1] = {sims[i][pos]};
    anchor_losses.push_back(anchor_term(tape, candidates, positives));
  }
  return tape.mean(anchor_losses);
}

NodeId loss_temp_node(Tape& tape, std::span<const TripletNodes> triplets, double alpha) {
  if (alpha < 0.0) throw std::invalid_argument("loss_temp: alpha must be >= 0");
  if (triplets.empty()) throw std::invalid_argument("loss_temp: empty triplet list");
  std::vector<NodeId> terms;
  terms.reserve(triplets.size());
  for (const TripletNodes& t : triplets) {
    const NodeId d_pos = tape.euclid(t.anchor, t.positive);
    const NodeId d_neg = tape.euclid(t.anchor, t.negative);
    terms.push_back(tape.relu(tape.add_const(tape.sub(d_pos, d_neg), alpha)));
  }
  return tape.mean(terms);
}

NodeId loss_cross_node(Tape& tape, std::span<const NodeId> z_target,
                       std::span<const int> pseudo_labels,
                       std::span<const NodeId> z_source,
                       std::span<const int> source_labels, double tau) {
  if (tau <= 0.0) throw std::invalid_argument("loss_cross: tau must be > 0");
  if (z_target.size() != pseudo_labels.size()) {
    throw std::invalid_argument("loss_cross: target/pseudo-label size mismatch");
  }
  if (z_source.size() != source_labels.size()) {
    throw std::invalid_argument("loss_cross: source/label size mismatch");
  }
  if (z_target.empty()) {
    counters().empty_cross_batches++;
    return tape.scalar_leaf(0.0);
  }
  if (z_source.empty()) throw std::invalid_argument("loss_cross: empty source view pool");

  std::vector<NodeId> anchor_losses;
  std::vector<NodeId> candidates, positives;
  for (std::size_t i = 0; i < z_target.size(); ++i) {
    candidates.clear();
    positives.clear();
    for (std::size_t j = 0; j < z_source.size(); ++j) {
      const NodeId sim = tape.scale(tape.cosine(z_target[i], z_source[j]), 1.0 / tau);
      candidates.push_back(sim);
      if (source_labels[j] == pseudo_labels[i]) positives.push_back(sim);
    }
    if (positives.empty()) {
      counters().skipped_anchors++;
      continue;
    }
    anchor_losses.push_back(anchor_term(tape, candidates, positives));
  }
  if (anchor_losses.empty()) return tape.scalar_leaf(0.0);
  return tape.mean(anchor_losses);
}

NodeId loss_ce_node(Tape& tape, std::span<const NodeId> logits_rows,
                    std::span<const int> labels) {
  if (logits_rows.size() != labels.size()) {
    throw std::invalid_argument("loss_ce: rows/labels size mismatch");
  }
  if (logits_rows.empty()) throw std::invalid_argument("loss_ce: no rows");
  std::vector<NodeId> terms;
  terms.reserve(logits_rows.size());
  for (std::size_t i = 0; i < logits_rows.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= tape.dim(logits_rows[i])) {
      throw std::out_of_range("loss_ce: label " + std::to_string(labels[i]) +
                              " out of range for row " + std::to_string(i));
    }
    terms.push_back(
        tape.sub(tape.logsumexp(logits_rows[i]), tape.pick(logits_rows[i], labels[i])));
  }
  return tape.mean(terms);
}

NodeId loss_open_node(Tape& tape, std::span<const NodeId> logits_rows,
                      std::span<const int> labels, std::span<const RowRole> roles, int K) {
  if (logits_rows.size() != roles.size()) {
    throw std::invalid_argument("loss_open: rows/roles size mismatch");
  }
  for (std::size_t i = 0; i < logits_rows.size(); ++i) {
    if (tape.dim(logits_rows[i]) != K + 1) {
      throw std::invalid_argument("loss_open: row " + std::to_string(i) +
                                  " is not (K+1)-way");
    }
    if (roles[i] == RowRole::known && (labels[i] < 0 || labels[i] >= K)) {
      throw std::out_of_range("loss_open: known row " + std::to_string(i) +
                              " must carry a label < K");
    }
    if (roles[i] == RowRole::unknown && labels[i] != K) {
      throw std::out_of_range("loss_open: unknown row " + std::to_string(i) +
                              " must carry label K");
    }
  }
  return loss_ce_node(tape, logits_rows, labels);
}

NodeId total_loss_node(Tape& tape, const LossTermNodes& parts, double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("total_loss: lambda must be >= 0");
  const auto require_finite = [&tape](NodeId id, const char* name) {
    if (id >= 0 && !std::isfinite(tape.value(id))) {
      throw std::runtime_error(std::string("total_loss: non-finite part '") + name + "'");
    }
  };
  require_finite(parts.open, "open");
  require_finite(parts.sup, "sup");
  require_finite(parts.aug, "aug");
  require_finite(parts.cross, "cross");
  require_finite(parts.temp, "temp");

  NodeId total = -1;
  const auto accumulate = [&tape, &total](NodeId id) {
    if (id < 0) return;
    total = total < 0 ? id : tape.add(total, id);
  };
  accumulate(parts.open);
  accumulate(parts.sup);
  accumulate(parts.aug);
  accumulate(parts.cross);
  if (parts.temp >= 0) accumulate(tape.scale(parts.temp, lambda));
  return total >= 0 ? total : tape.scalar_leaf(0.0);
}

// --------------------------- value-level wrappers ---------------------------

namespace {

std::vector<NodeId> push_vecs(Tape& tape, std::span<const Vec> vs) {
  std::vector<NodeId> ids;
  ids.reserve(vs.size());
  for (const Vec& v : vs) ids.push_back(tape.leaf(v));
  return ids;
}

}  // namespace

double loss_sup(std::span<const Vec> z_views, std::span<const int> labels, double tau) {
  Tape tape;
  return tape.value(loss_sup_node(tape, push_vecs(tape, z_views), labels, tau));
}

double loss_aug(std::span<const Vec> z, std::span<const Vec> z_tilde, double tau) {
  Tape tape;
  return tape.value(
      loss_aug_node(tape, push_vecs(tape, z), push_vecs(tape, z_tilde), tau));
}

double loss_temp(std::span<const double> h, std::span<const double> h_tilde,
                 std::span<const double> h_minus, double alpha) {
  Tape tape;
  const TripletNodes t{tape.leaf(h), tape.leaf(h_tilde), tape.leaf(h_minus)};
  return tape.value(loss_temp_node(tape, std::span<const TripletNodes>(&t, 1), alpha));
}

double loss_temp_batch(std::span<const Vec> h, std::span<const Vec> h_tilde,
                       std::span<const Vec> h_minus, double alpha) {
  if (h.size() != h_tilde.size() || h.size() != h_minus.size()) {
    throw std::invalid_argument("loss_temp_batch: size mismatch");
  }
  Tape tape;
  std::vector<TripletNodes> triplets;
  triplets.reserve(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) {
    triplets.push_back({tape.leaf(h[i]), tape.leaf(h_tilde[i]), tape.leaf(h_minus[i])});
  }
  return tape.value(loss_temp_node(tape, triplets, alpha));
}

double loss_cross(std::span<const Vec> z_target, std::span<const int> pseudo_labels,
                  std::span<const Vec> z_source, std::span<const int> source_labels,
                  double tau) {
  Tape tape;
  return tape.value(loss_cross_node(tape, push_vecs(tape, z_target), pseudo_labels,
                                    push_vecs(tape, z_source), source_labels, tau));
}

double loss_open(std::span<const Vec> logits_rows, std::span<const int> labels,
                 std::span<const RowRole> roles, int K) {
  Tape tape;
  return tape.value(loss_open_node(tape, push_vecs(tape, logits_rows), labels, roles, K));
}

double total_loss(const LossParts& parts, double lambda) {
  Tape tape;
  LossTermNodes nodes;
  nodes.open = tape.scalar_leaf(parts.open);
  nodes.sup = tape.scalar_leaf(parts.sup);
  nodes.aug = tape.scalar_leaf(parts.aug);
  nodes.cross = tape.scalar_leaf(parts.cross);
  nodes.temp = tape.scalar_leaf(parts.temp);
  return tape.value(total_loss_node(tape, nodes, lambda));
}

}  // namespace coloseo

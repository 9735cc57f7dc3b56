#pragma once

#include <span>
#include <vector>

#include "coloseo/autodiff.hpp"

namespace coloseo {

struct ContrastiveConfig {
  double tau = 0.1;     // temperature
  double alpha = 1.0;   // triplet margin
  double lambda = 0.1;  // temporal loss weight

  void validate() const;
};

// Plain cosine similarity with the training convention for degenerate input:
// a zero-norm vector yields 0 and bumps the zero_norm_cosine counter.
double cosine_sim(std::span<const double> u, std::span<const double> v);

// ---------------------------------------------------------------------------
// Tape-level losses (the training path). All contrastive losses follow the
// Sup-Con "mean of logs over positives" form: for anchor i with positive set
// P(i),  L_i = LSE_k(sim_ik / tau) - (1/|P|) sum_{j in P} sim_ij / tau,
// where the log-sum-exp runs over the anchor's full candidate set.
// ---------------------------------------------------------------------------

// Label-based contrastive loss over the 2b pooled source views. Anchors with
// no in-batch positive are skipped (counted); throws when fewer than 2 views.
NodeId loss_sup_node(Tape& tape, std::span<const NodeId> z_views,
                     std::span<const int> labels, double tau);

// Augmentation-based NT-Xent over the pooled target views [z, z_tilde]:
// positive of view i is its sibling view, candidates are all other 2b-1
// views, mean over all 2b anchors (swap-and-average symmetrization).
NodeId loss_aug_node(Tape& tape, std::span<const NodeId> z,
                     std::span<const NodeId> z_tilde, double tau);

// Temporal triplet on video-level features: max(d(a,p) - d(a,n) + alpha, 0),
// mean over triplets.
struct TripletNodes {
  NodeId anchor;
  NodeId positive;  // augmented view
  NodeId negative;  // clip-shuffled view
};
NodeId loss_temp_node(Tape& tape, std::span<const TripletNodes> triplets, double alpha);

// Cross-domain contrastive loss: accepted target anchors against the 2b
// source views, positives selected by pseudo-label. Anchors are never
// contrasted against other targets. Empty accepted set yields 0 and bumps
// empty_cross_batches.
NodeId loss_cross_node(Tape& tape, std::span<const NodeId> z_target,
                       std::span<const int> pseudo_labels,
                       std::span<const NodeId> z_source,
                       std::span<const int> source_labels, double tau);

// Plain cross-entropy over logits rows; labels must index into each row.
NodeId loss_ce_node(Tape& tape, std::span<const NodeId> logits_rows,
                    std::span<const int> labels);

// Open-set cross-entropy over (K+1)-way logits: known rows carry labels < K,
// unknown rows carry label K exactly.
enum class RowRole { known, unknown };
NodeId loss_open_node(Tape& tape, std::span<const NodeId> logits_rows,
                      std::span<const int> labels, std::span<const RowRole> roles, int K);

// Overall objective: open + sup + aug + cross + lambda * temp. Any term may be
// absent (id < 0, treated as zero). Throws naming the first non-finite part.
struct LossTermNodes {
  NodeId open = -1;
  NodeId sup = -1;
  NodeId aug = -1;
  NodeId cross = -1;
  NodeId temp = -1;
};
NodeId total_loss_node(Tape& tape, const LossTermNodes& parts, double lambda);

// ---------------------------------------------------------------------------
// Value-level wrappers: evaluate the same graph construction on a scratch
// tape. Used by tests, the entropy rejector and anywhere gradients are not
// needed.
// ---------------------------------------------------------------------------

using Vec = std::vector<double>;

double loss_sup(std::span<const Vec> z_views, std::span<const int> labels, double tau);
double loss_aug(std::span<const Vec> z, std::span<const Vec> z_tilde, double tau);
double loss_temp(std::span<const double> h, std::span<const double> h_tilde,
                 std::span<const double> h_minus, double alpha);
double loss_temp_batch(std::span<const Vec> h, std::span<const Vec> h_tilde,
                       std::span<const Vec> h_minus, double alpha);
double loss_cross(std::span<const Vec> z_target, std::span<const int> pseudo_labels,
                  std::span<const Vec> z_source, std::span<const int> source_labels,
                  double tau);
double loss_open(std::span<const Vec> logits_rows, std::span<const int> labels,
                 std::span<const RowRole> roles, int K);

struct LossParts {
  double open = 0.0;
  double sup = 0.0;
  double aug = 0.0;
  double cross = 0.0;
  double temp = 0.0;
};
double total_loss(const LossParts& parts, double lambda);

}  // namespace coloseo

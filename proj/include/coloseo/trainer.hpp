#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "coloseo/data_model.hpp"
#include "coloseo/losses.hpp"
#include "coloseo/network.hpp"
#include "coloseo/openset.hpp"

namespace coloseo {

struct TrainConfig {
  int stage1_epochs = 30;
  int stage2_epochs = 30;
  double lr = 0.01;
  double momentum = 0.9;
  int b = 16;
  ContrastiveConfig contrastive;    // tau, alpha, lambda
  double gamma = 0.7;               // prototype rejection threshold
  double entropy_threshold = 1.0;   // entropy rejection threshold (nats)
  double aug_strength = 0.1;
  std::uint64_t seed = 0;
  RejectionMode rejection_mode = RejectionMode::prototype;

  void validate() const;
};

enum class Stage { one, two };

struct EpochRecord {
  int stage = 1;
  int epoch = 0;  // index within the stage
  double ce = 0.0;
  double sup = 0.0;
  double aug = 0.0;
  double temp = 0.0;
  double open = 0.0;
  double cross = 0.0;
  double total = 0.0;
  double rejection_rate = 0.0;
  std::optional<double> pseudo_all_acc;
};

struct TrainState {
  ModelParams params;
  ModelParams velocity;  // same shape as params
  int epoch = 0;         // total epochs run across stages
  Stage stage = Stage::one;
  std::vector<EpochRecord> history;
};

TrainState make_initial_state(const ModelDims& dims, std::uint64_t seed);

// velocity <- momentum * velocity + grads; params <- params - lr * velocity.
// Throws naming the offending tensor if any gradient is non-finite.
void sgd_step(TrainState& state, const ModelParams& grads, double lr, double momentum);

// Stage 1: representation learning. Per batch the objective is
// CE(C on source views) + L_sup + L_aug + lambda * L_temp; the open-set
// classifier and pseudo-labels play no part.
void train_stage1(const Dataset& source, const Dataset& target, const TrainConfig& config,
                  TrainState& state);

// Stage 2: alignment and open-set classification. Prototypes are recomputed
// each epoch; every batch rejects target samples, pseudo-labels the accepted
// ones via C and optimizes L_open + L_sup + L_aug + L_cross + lambda * L_temp.
// C' is warm-started from C on entry.
void train_stage2(const Dataset& source, const Dataset& target, const TrainConfig& config,
                  TrainState& state);

// argmax over the (K+1)-way classifier; index K means "unknown".
int infer(const ModelParams& params, const VideoSample& sample);

std::string history_to_json(const std::vector<EpochRecord>& history);

}  // namespace coloseo

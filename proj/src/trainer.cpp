#include "coloseo/trainer.hpp"

#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "coloseo/diagnostics.hpp"
#include "coloseo/eval.hpp"

namespace coloseo {

using json = nlohmann::json;

void TrainConfig::validate() const {
  if (stage1_epochs < 0 || stage2_epochs < 0) {
    throw std::invalid_argument("train config: epochs must be >= 0");
  }
  if (lr <= 0.0) throw std::invalid_argument("train config: lr must be > 0");
  if (momentum < 0.0 || momentum >= 1.0) {
    throw std::invalid_argument("train config: momentum must lie in [0, 1)");
  }
  if (b < 2) throw std::invalid_argument("train config: batch size must be >= 2");
  if (gamma < -1.0 || gamma > 1.0) {
    throw std::invalid_argument("train config: gamma must lie in [-1, 1]");
  }
  if (entropy_threshold < 0.0) {
    throw std::invalid_argument("train config: entropy_threshold must be >= 0");
  }
  if (aug_strength < 0.0) throw std::invalid_argument("train config: aug_strength must be >= 0");
  contrastive.validate();
}

TrainState make_initial_state(const ModelDims& dims, std::uint64_t seed) {
  TrainState state;
  state.params = init_params(dims, seed);
  state.velocity = zeros_like(state.params);
  return state;
}

void sgd_step(TrainState& state, const ModelParams& grads, double lr, double momentum) {
  for (ConstTensorRef g : tensor_refs(grads)) {
    for (double v : *g.data) {
      if (!std::isfinite(v)) {
        throw std::runtime_error(std::string("sgd_step: non-finite gradient in ") + g.name);
      }
    }
  }
  auto vel = tensor_refs(state.velocity);
  auto par = tensor_refs(state.params);
  const auto grd = tensor_refs(grads);
  for (std::size_t t = 0; t < vel.size(); ++t) {
    std::vector<double>& v = *vel[t].data;
    std::vector<double>& p = *par[t].data;
    const std::vector<double>& g = *grd[t].data;
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = momentum * v[i] + g[i];
      p[i] -= lr * v[i];
    }
  }
}

namespace {

// Forward pass of one batch entry's views: video-level features and, where
// needed, projections.
struct ViewNodes {
  NodeId h1, h2, h_neg;
  NodeId z1, z2;
};

std::vector<ViewNodes> forward_entries(Tape& tape, const ParamNodes& pn, const ModelDims& dims,
                                       const std::vector<BatchEntry>& entries) {
  std::vector<ViewNodes> out;
  out.reserve(entries.size());
  for (const BatchEntry& e : entries) {
    ViewNodes v;
    v.h1 = aggregate_node(tape, pn, dims, e.view1);
    v.h2 = aggregate_node(tape, pn, dims, e.view2);
    v.h_neg = aggregate_node(tape, pn, dims, e.shuffled);
    v.z1 = project_node(tape, pn, dims, v.h1);
    v.z2 = project_node(tape, pn, dims, v.h2);
    out.push_back(v);
  }
  return out;
}

std::vector<TripletNodes> collect_triplets(const std::vector<ViewNodes>& views) {
  std::vector<TripletNodes> triplets;
  triplets.reserve(views.size());
  for (const ViewNodes& v : views) triplets.push_back({v.h1, v.h2, v.h_neg});
  return triplets;
}

struct EpochAccumulator {
  double ce = 0, sup = 0, aug = 0, temp = 0, open = 0, cross = 0, total = 0;
  double rejected = 0;
  int batches = 0;

  void record(EpochRecord& rec) const {
    const double n = batches > 0 ? batches : 1;
    rec.ce = ce / n;
    rec.sup = sup / n;
    rec.aug = aug / n;
    rec.temp = temp / n;
    rec.open = open / n;
    rec.cross = cross / n;
    rec.total = total / n;
    rec.rejection_rate = rejected / n;
  }
};

void check_finite_record(const EpochRecord& rec) {
  for (double v : {rec.ce, rec.sup, rec.aug, rec.temp, rec.open, rec.cross, rec.total}) {
    if (!std::isfinite(v)) {
      throw std::runtime_error("training: non-finite loss term recorded at stage " +
                               std::to_string(rec.stage) + " epoch " +
                               std::to_string(rec.epoch));
    }
  }
}

void warm_start_open_classifier(ModelParams& p) {
  // first K rows of C' copied from C, unknown row zeroed
  const int K = p.dims.K;
  for (int k = 0; k < K; ++k) {
    for (int f = 0; f < p.dims.F; ++f) p.open_w.at(k, f) = p.cls_w.at(k, f);
    p.open_b[k] = p.cls_b[k];
  }
  for (int f = 0; f < p.dims.F; ++f) p.open_w.at(K, f) = 0.0;
  p.open_b[K] = 0.0;
}

}  // namespace

void train_stage1(const Dataset& source, const Dataset& target, const TrainConfig& config,
                  TrainState& state) {
  config.validate();
  TrainingScope guard;
  const ModelDims& dims = state.params.dims;
  if (source.clip_dim() != dims.D || source.clips_per_video() != dims.c ||
      target.clip_dim() != dims.D || target.clips_per_video() != dims.c ||
      source.num_shared_classes() != dims.K) {
    throw std::invalid_argument("train_stage1: dataset dims do not match model dims");
  }

  for (int epoch = 0; epoch < config.stage1_epochs; ++epoch) {
    const std::uint64_t epoch_seed = mix_seed(config.seed, 0x100000 + epoch);
    const std::vector<Batch> batches =
        make_batches(source, target, config.b, epoch_seed, config.aug_strength);
    EpochAccumulator acc;

    for (const Batch& batch : batches) {
      Tape tape;
      const ParamNodes pn = push_params(tape, state.params);

      const std::vector<ViewNodes> src = forward_entries(tape, pn, dims, batch.source);
      const std::vector<ViewNodes> tgt = forward_entries(tape, pn, dims, batch.target);

      // source CE on both views through the closed-set classifier
      std::vector<NodeId> ce_rows;
      std::vector<int> ce_labels;
      std::vector<NodeId> sup_views;
      std::vector<int> sup_labels;
      for (std::size_t i = 0; i < src.size(); ++i) {
        const int y = source.samples()[batch.source[i].sample_index].source_label();
        for (NodeId h : {src[i].h1, src[i].h2}) {
          ce_rows.push_back(classify_node(tape, pn, dims, h));
          ce_labels.push_back(y);
        }
        sup_views.push_back(src[i].z1);
        sup_labels.push_back(y);
      }
      for (std::size_t i = 0; i < src.size(); ++i) {
        sup_views.push_back(src[i].z2);
        sup_labels.push_back(source.samples()[batch.source[i].sample_index].source_label());
      }

      std::vector<NodeId> tz1, tz2;
      for (const ViewNodes& v : tgt) {
        tz1.push_back(v.z1);
        tz2.push_back(v.z2);
      }
      std::vector<TripletNodes> triplets = collect_triplets(src);
      const std::vector<TripletNodes> tgt_triplets = collect_triplets(tgt);
      triplets.insert(triplets.end(), tgt_triplets.begin(), tgt_triplets.end());

      const NodeId ce = loss_ce_node(tape, ce_rows, ce_labels);
      const NodeId sup = loss_sup_node(tape, sup_views, sup_labels, config.contrastive.tau);
      const NodeId aug = loss_aug_node(tape, tz1, tz2, config.contrastive.tau);
      const NodeId temp = loss_temp_node(tape, triplets, config.contrastive.alpha);

      LossTermNodes parts;
      parts.open = ce;  // stage 1 substitutes plain K-way CE for the open term
      parts.sup = sup;
      parts.aug = aug;
      parts.temp = temp;
      const NodeId objective = total_loss_node(tape, parts, config.contrastive.lambda);

      const ModelParams grads = backward(tape, pn, dims, objective);
      sgd_step(state, grads, config.lr, config.momentum);

      acc.ce += tape.value(ce);
      acc.sup += tape.value(sup);
      acc.aug += tape.value(aug);
      acc.temp += tape.value(temp);
      acc.total += tape.value(objective);
      acc.batches++;
    }

    EpochRecord rec;
    rec.stage = 1;
    rec.epoch = epoch;
    acc.record(rec);
    check_finite_record(rec);
    state.history.push_back(rec);
    state.epoch++;
  }
}

void train_stage2(const Dataset& source, const Dataset& target, const TrainConfig& config,
                  TrainState& state) {
  config.validate();
  TrainingScope guard;
  const ModelDims& dims = state.params.dims;
  const int K = dims.K;
  if (source.clip_dim() != dims.D || source.clips_per_video() != dims.c ||
      target.clip_dim() != dims.D || target.clips_per_video() != dims.c ||
      source.num_shared_classes() != dims.K) {
    throw std::invalid_argument("train_stage2: dataset dims do not match model dims");
  }

  state.stage = Stage::two;
  if (config.stage2_epochs == 0) return;  // marker only; params untouched

  warm_start_open_classifier(state.params);
  state.velocity = zeros_like(state.params);  // fresh optimizer state per stage

  for (int epoch = 0; epoch < config.stage2_epochs; ++epoch) {
    const Prototypes protos = compute_prototypes(state.params, source);
    const std::uint64_t epoch_seed = mix_seed(config.seed, 0x200000 + epoch);
    const std::vector<Batch> batches =
        make_batches(source, target, config.b, epoch_seed, config.aug_strength);
    EpochAccumulator acc;

    for (const Batch& batch : batches) {
      // Rejection and pseudo-labels from the un-augmented target samples under
      // current parameters; these are frozen decisions for this batch.
      std::vector<char> rejected(batch.target.size(), 0);
      std::vector<int> pseudo(batch.target.size(), -1);
      for (std::size_t i = 0; i < batch.target.size(); ++i) {
        const VideoSample& s = target.samples()[batch.target[i].sample_index];
        const std::vector<double> h = aggregate(state.params, s);
        const RejectionDecision dec =
            config.rejection_mode == RejectionMode::prototype
                ? reject_unknown(h, protos, config.gamma)
                : reject_unknown_entropy(state.params, h, config.entropy_threshold);
        rejected[i] = dec.s ? 1 : 0;
        if (!dec.s) pseudo[i] = pseudo_label(state.params, h);
      }

      Tape tape;
      const ParamNodes pn = push_params(tape, state.params);
      const std::vector<ViewNodes> src = forward_entries(tape, pn, dims, batch.source);
      const std::vector<ViewNodes> tgt = forward_entries(tape, pn, dims, batch.target);

      std::vector<NodeId> sup_views;
      std::vector<int> sup_labels;
      std::vector<NodeId> open_rows;
      std::vector<int> open_labels;
      std::vector<RowRole> open_roles;
      for (std::size_t i = 0; i < src.size(); ++i) {
        const int y = source.samples()[batch.source[i].sample_index].source_label();
        sup_views.push_back(src[i].z1);
        sup_labels.push_back(y);
        for (NodeId h : {src[i].h1, src[i].h2}) {
          open_rows.push_back(classify_open_node(tape, pn, dims, h));
          open_labels.push_back(y);
          open_roles.push_back(RowRole::known);
        }
      }
      for (std::size_t i = 0; i < src.size(); ++i) {
        sup_views.push_back(src[i].z2);
        sup_labels.push_back(source.samples()[batch.source[i].sample_index].source_label());
      }

      std::vector<NodeId> tz1, tz2;
      for (const ViewNodes& v : tgt) {
        tz1.push_back(v.z1);
        tz2.push_back(v.z2);
      }

      // rejected targets feed the open-set CE with the unknown label
      int n_rejected = 0;
      for (std::size_t i = 0; i < tgt.size(); ++i) {
        if (!rejected[i]) continue;
        n_rejected++;
        for (NodeId h : {tgt[i].h1, tgt[i].h2}) {
          open_rows.push_back(classify_open_node(tape, pn, dims, h));
          open_labels.push_back(K);
          open_roles.push_back(RowRole::unknown);
        }
      }

      // accepted targets anchor the cross-domain loss (un-augmented forward,
      // recorded on the tape so gradients flow)
      std::vector<NodeId> cross_anchors;
      std::vector<int> cross_labels;
      for (std::size_t i = 0; i < tgt.size(); ++i) {
        if (rejected[i]) continue;
        const VideoSample& s = target.samples()[batch.target[i].sample_index];
        const NodeId h = aggregate_node(tape, pn, dims, s);
        cross_anchors.push_back(project_node(tape, pn, dims, h));
        cross_labels.push_back(pseudo[i]);
      }

      std::vector<TripletNodes> triplets = collect_triplets(src);
      const std::vector<TripletNodes> tgt_triplets = collect_triplets(tgt);
      triplets.insert(triplets.end(), tgt_triplets.begin(), tgt_triplets.end());

      LossTermNodes parts;
      parts.open = loss_open_node(tape, open_rows, open_labels, open_roles, K);
      parts.sup = loss_sup_node(tape, sup_views, sup_labels, config.contrastive.tau);
      parts.aug = loss_aug_node(tape, tz1, tz2, config.contrastive.tau);
      parts.cross = loss_cross_node(tape, cross_anchors, cross_labels, sup_views, sup_labels,
                                    config.contrastive.tau);
      parts.temp = loss_temp_node(tape, triplets, config.contrastive.alpha);
      const NodeId objective = total_loss_node(tape, parts, config.contrastive.lambda);

      const ModelParams grads = backward(tape, pn, dims, objective);
      sgd_step(state, grads, config.lr, config.momentum);

      acc.open += tape.value(parts.open);
      acc.sup += tape.value(parts.sup);
      acc.aug += tape.value(parts.aug);
      acc.cross += tape.value(parts.cross);
      acc.temp += tape.value(parts.temp);
      acc.total += tape.value(objective);
      acc.rejected += static_cast<double>(n_rejected) / static_cast<double>(tgt.size());
      acc.batches++;
    }

    EpochRecord rec;
    rec.stage = 2;
    rec.epoch = epoch;
    acc.record(rec);
    // Fig. 7-style tracking: protocol label accuracy over the whole target,
    // measured through the evaluation module.
    rec.pseudo_all_acc = pseudo_label_all_accuracy(
        state.params, target,
        config.rejection_mode == RejectionMode::prototype ? &protos : nullptr,
        config.rejection_mode == RejectionMode::prototype ? config.gamma
                                                          : config.entropy_threshold,
        config.rejection_mode);
    check_finite_record(rec);
    state.history.push_back(rec);
    state.epoch++;
  }
}

int infer(const ModelParams& params, const VideoSample& sample) {
  const std::vector<double> h = aggregate(params, sample);
  const std::vector<double> logits = classify_open(params, h);
  int best = 0;
  for (std::size_t k = 1; k < logits.size(); ++k) {
    if (logits[k] > logits[best]) best = static_cast<int>(k);
  }
  return best;
}

std::string history_to_json(const std::vector<EpochRecord>& history) {
  json arr = json::array();
  for (const EpochRecord& r : history) {
    json j;
    j["stage"] = r.stage;
    j["epoch"] = r.epoch;
    j["ce"] = r.ce;
    j["sup"] = r.sup;
    j["aug"] = r.aug;
    j["temp"] = r.temp;
    j["open"] = r.open;
    j["cross"] = r.cross;
    j["total"] = r.total;
    j["rejection_rate"] = r.rejection_rate;
    if (r.pseudo_all_acc) {
      j["pseudo_all_acc"] = *r.pseudo_all_acc;
    } else {
      j["pseudo_all_acc"] = nullptr;
    }
    arr.push_back(std::move(j));
  }
  return arr.dump(2);
}

}  // namespace coloseo

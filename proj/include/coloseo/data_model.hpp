#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "coloseo/rng.hpp"

namespace coloseo {

enum class Domain { source, target };

// One video as an ordered list of c precomputed clip feature vectors.
// Features are stored at 32-bit precision; that precision is the manifest
// round-trip contract. The label is private: training code reads labels via
// source_label(), which rejects target samples; evaluation and serialization
// read ground_truth_label() inside an EvaluationScope. A ground-truth read on
// a training path (inside a TrainingScope, outside an EvaluationScope) bumps
// the label_contract_violations counter and throws.
class VideoSample {
 public:
  VideoSample(std::string id, Domain domain, std::optional<int> label,
              std::vector<std::vector<float>> clips);

  const std::string& id() const { return id_; }
  Domain domain() const { return domain_; }
  const std::vector<std::vector<float>>& clips() const { return clips_; }
  int clip_count() const { return static_cast<int>(clips_.size()); }
  int clip_dim() const { return clips_.empty() ? 0 : static_cast<int>(clips_[0].size()); }
  bool has_label() const { return label_.has_value(); }

  // Training accessor: valid only for source samples.
  int source_label() const;
  // Evaluation/serialization accessor.
  int ground_truth_label() const;

  bool operator==(const VideoSample& other) const;

 private:
  std::string id_;
  Domain domain_;
  std::optional<int> label_;
  std::vector<std::vector<float>> clips_;
};

// Marks the dynamic extent of a training loop. Ground-truth reads inside it
// are contract violations unless an EvaluationScope is also open.
struct TrainingScope {
  TrainingScope();
  ~TrainingScope();
};

// Marks sanctioned ground-truth access (metrics, serialization).
struct EvaluationScope {
  EvaluationScope();
  ~EvaluationScope();
};

// Immutable after construction; safe to share read-only across threads.
class Dataset {
 public:
  Dataset(std::vector<VideoSample> samples, int num_shared_classes,
          int clip_dim, int clips_per_video);

  const std::vector<VideoSample>& samples() const { return samples_; }
  std::size_t size() const { return samples_.size(); }
  int num_shared_classes() const { return num_shared_classes_; }
  int clip_dim() const { return clip_dim_; }
  int clips_per_video() const { return clips_per_video_; }

  bool operator==(const Dataset& other) const;

 private:
  std::vector<VideoSample> samples_;
  int num_shared_classes_;
  int clip_dim_;
  int clips_per_video_;
};

struct SynthConfig {
  int K = 6;                  // shared class count
  int num_private = 6;        // target-private class count
  int D = 16;                 // clip feature dim
  int c = 3;                  // clips per video
  int samples_per_class = 50;
  double domain_shift = 0.5;  // magnitude of the global target offset
  double cluster_std = 0.25;
  bool temporal_signature = false;  // classes 0 and 1 differ only by clip order
  // Position spread of the shared clip pool behind the designated pair,
  // relative to the unit class-mean scale. Small values leave the pair almost
  // indistinguishable without amplifying the clip-order signal.
  double signature_spread = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthPair {
  Dataset source;
  Dataset target;
};

// Deterministic synthetic stand-in for an open-set benchmark: the source holds
// K labelled classes, the target holds the same K classes offset by
// domain_shift plus num_private private classes labelled K. With
// temporal_signature, classes 0 and 1 draw from one clip pool in rotated
// order, so their pooled per-clip statistics coincide.
SynthPair synth_dataset(const SynthConfig& config);

// Feature-space stand-in for the strong augmentations t(.)/t~(.):
// additive Gaussian noise, component dropout, global scale jitter.
struct AugmentSpec {
  double noise_std = 0.0;
  double dropout_p = 0.0;
  double scale_jitter = 0.0;  // scale drawn uniform in [1-j, 1+j]
};

VideoSample augment_with(const VideoSample& sample, const AugmentSpec& spec, Rng& rng);

// strength s maps to {noise_std = s, dropout_p = s/2, scale_jitter = s}.
// Never reorders clips; s = 0 is the identity.
VideoSample augment(const VideoSample& sample, double strength, Rng& rng);

// Clip-shuffled negative: multiset of clips preserved, permutation guaranteed
// non-identity (requires c >= 2, enforced at Dataset construction).
VideoSample shuffle_clips(const VideoSample& sample, Rng& rng);

// JSONL manifests. Line 1 is {"D": int, "K": int, "c": int}; every following
// line is one sample. write_manifest(load_manifest(p)) is the identity at
// 32-bit feature precision.
Dataset load_manifest(const std::string& path);
void write_manifest(const Dataset& dataset, const std::string& path);

struct BatchEntry {
  int sample_index;     // into the originating dataset
  VideoSample view1;    // t(x)
  VideoSample view2;    // t~(x)
  VideoSample shuffled; // clip-shuffled copy of view1, the temporal negative
};

struct Batch {
  std::vector<BatchEntry> source;
  std::vector<BatchEntry> target;
};

// One epoch worth of paired mini-batches: deterministic given seed, last
// partial batch dropped, per-sample augmentation streams sub-seeded so they
// are independent of batch composition.
std::vector<Batch> make_batches(const Dataset& source, const Dataset& target,
                                int b, std::uint64_t seed, double aug_strength);

}  // namespace coloseo

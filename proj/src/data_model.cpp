#include "coloseo/data_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <utility>

#include <json.hpp>

#include "coloseo/diagnostics.hpp"

namespace coloseo {

using json = nlohmann::json;

namespace {
thread_local int g_training_depth = 0;
thread_local int g_evaluation_depth = 0;
}  // namespace

TrainingScope::TrainingScope() { ++g_training_depth; }
TrainingScope::~TrainingScope() { --g_training_depth; }
EvaluationScope::EvaluationScope() { ++g_evaluation_depth; }
EvaluationScope::~EvaluationScope() { --g_evaluation_depth; }

VideoSample::VideoSample(std::string id, Domain domain, std::optional<int> label,
                         std::vector<std::vector<float>> clips)
    : id_(std::move(id)), domain_(domain), label_(label), clips_(std::move(clips)) {}

int VideoSample::source_label() const {
  if (domain_ != Domain::source) {
    counters().label_contract_violations++;
    throw std::logic_error("source_label() called on target sample '" + id_ +
                           "': target labels are evaluation-only");
  }
  if (!label_) {
    throw std::logic_error("source sample '" + id_ + "' has no label");
  }
  return *label_;
}

int VideoSample::ground_truth_label() const {
  if (g_training_depth > 0 && g_evaluation_depth == 0) {
    counters().label_contract_violations++;
    throw std::logic_error("ground_truth_label() of '" + id_ +
                           "' read on a training path");
  }
  if (!label_) {
    throw std::runtime_error("sample '" + id_ + "' carries no ground-truth label");
  }
  return *label_;
}

bool VideoSample::operator==(const VideoSample& other) const {
  return id_ == other.id_ && domain_ == other.domain_ && label_ == other.label_ &&
         clips_ == other.clips_;
}

Dataset::Dataset(std::vector<VideoSample> samples, int num_shared_classes,
                 int clip_dim, int clips_per_video)
    : samples_(std::move(samples)),
      num_shared_classes_(num_shared_classes),
      clip_dim_(clip_dim),
      clips_per_video_(clips_per_video) {
  if (num_shared_classes_ < 1) throw std::invalid_argument("dataset: K must be >= 1");
  if (clip_dim_ < 1) throw std::invalid_argument("dataset: D must be >= 1");
  if (clips_per_video_ < 2) throw std::invalid_argument("dataset: c must be >= 2");
  for (const VideoSample& s : samples_) {
    if (s.clip_count() != clips_per_video_) {
      throw std::runtime_error("dimension mismatch in sample '" + s.id() + "': expected " +
                               std::to_string(clips_per_video_) + " clips, got " +
                               std::to_string(s.clip_count()));
    }
    for (const auto& clip : s.clips()) {
      if (static_cast<int>(clip.size()) != clip_dim_) {
        throw std::runtime_error("dimension mismatch in sample '" + s.id() +
                                 "': expected clip dim " + std::to_string(clip_dim_) +
                                 ", got " + std::to_string(clip.size()));
      }
      for (float v : clip) {
        if (!std::isfinite(v)) {
          throw std::runtime_error("non-finite feature in sample '" + s.id() + "'");
        }
      }
    }
    if (s.domain() == Domain::source) {
      if (!s.has_label()) {
        throw std::runtime_error("missing label for source sample '" + s.id() + "'");
      }
      const int y = s.source_label();
      if (y < 0 || y >= num_shared_classes_) {
        throw std::runtime_error("source sample '" + s.id() + "' has label " +
                                 std::to_string(y) + " outside [0, K)");
      }
    } else if (s.has_label()) {
      EvaluationScope gate;
      const int y = s.ground_truth_label();
      if (y < 0 || y > num_shared_classes_) {
        throw std::runtime_error("target sample '" + s.id() + "' has label " +
                                 std::to_string(y) + " outside [0, K]");
      }
    }
  }
}

bool Dataset::operator==(const Dataset& other) const {
  return num_shared_classes_ == other.num_shared_classes_ && clip_dim_ == other.clip_dim_ &&
         clips_per_video_ == other.clips_per_video_ && samples_ == other.samples_;
}

void SynthConfig::validate() const {
  if (K < 1 || num_private < 1 || D < 1 || c < 2 || samples_per_class < 1) {
    throw std::invalid_argument("synth config: counts must be >= 1 (and c >= 2)");
  }
  if (cluster_std <= 0.0) throw std::invalid_argument("synth config: cluster_std must be > 0");
  if (domain_shift < 0.0) throw std::invalid_argument("synth config: domain_shift must be >= 0");
  if (signature_spread <= 0.0) {
    throw std::invalid_argument("synth config: signature_spread must be > 0");
  }
  if (temporal_signature && K < 2) {
    throw std::invalid_argument("synth config: temporal_signature needs K >= 2");
  }
}

namespace {

std::vector<float> draw_clip(const std::vector<double>& mean, double std_dev,
                             const std::vector<double>& offset, Rng& rng) {
  std::vector<float> clip(mean.size());
  for (std::size_t d = 0; d < mean.size(); ++d) {
    clip[d] = static_cast<float>(mean[d] + offset[d] + std_dev * rng.normal());
  }
  return clip;
}

}  // namespace

SynthPair synth_dataset(const SynthConfig& config) {
  config.validate();
  const int total_classes = config.K + config.num_private;

  Rng mean_rng = Rng(config.seed).child(0x6d65616e);  // class/position means
  Rng shift_rng = Rng(config.seed).child(0x73686674);
  Rng source_rng = Rng(config.seed).child(0x73726300);
  Rng target_rng = Rng(config.seed).child(0x74677400);

  // Per-class, per-position cluster means.
  std::vector<std::vector<std::vector<double>>> means(
      total_classes, std::vector<std::vector<double>>(config.c, std::vector<double>(config.D)));
  for (int k = 0; k < total_classes; ++k) {
    for (int p = 0; p < config.c; ++p) {
      for (int d = 0; d < config.D; ++d) means[k][p][d] = mean_rng.normal();
    }
  }
  if (config.temporal_signature) {
    // Classes 0 and 1 share one clip pool; class 1 sees it rotated by one
    // position, so pooled per-clip statistics coincide and only order differs.
    // The pool is a common base plus signature_spread-scaled per-position
    // offsets: shrinking the spread starves the pair of everything except the
    // clip-order signal.
    std::vector<double> base(config.D);
    for (int d = 0; d < config.D; ++d) base[d] = mean_rng.normal();
    for (int p = 0; p < config.c; ++p) {
      for (int d = 0; d < config.D; ++d) {
        means[0][p][d] = base[d] + config.signature_spread * mean_rng.normal();
      }
    }
    for (int p = 0; p < config.c; ++p) means[1][p] = means[0][(p + 1) % config.c];
    // With c >= 3 the first target-private class is yet another rotation of
    // the same pool: an unknown that matches the shared classes in every
    // pooled statistic and can only be rejected on clip order.
    if (config.c >= 3) {
      for (int p = 0; p < config.c; ++p) {
        means[config.K][p] = means[0][(p + 2) % config.c];
      }
    }
  }

  // Global covariate shift applied to every target sample.
  std::vector<double> shift(config.D, 0.0);
  double norm = 0.0;
  for (int d = 0; d < config.D; ++d) {
    shift[d] = shift_rng.normal();
    norm += shift[d] * shift[d];
  }
  norm = std::sqrt(norm);
  for (int d = 0; d < config.D; ++d) {
    shift[d] = norm > 0.0 ? config.domain_shift * shift[d] / norm : 0.0;
  }
  const std::vector<double> no_shift(config.D, 0.0);

  std::vector<VideoSample> source_samples;
  source_samples.reserve(static_cast<std::size_t>(config.K) * config.samples_per_class);
  for (int k = 0; k < config.K; ++k) {
    for (int i = 0; i < config.samples_per_class; ++i) {
      std::vector<std::vector<float>> clips(config.c);
      for (int p = 0; p < config.c; ++p) {
        clips[p] = draw_clip(means[k][p], config.cluster_std, no_shift, source_rng);
      }
      source_samples.emplace_back("s-" + std::to_string(k) + "-" + std::to_string(i),
                                  Domain::source, k, std::move(clips));
    }
  }

  std::vector<VideoSample> target_samples;
  target_samples.reserve(static_cast<std::size_t>(total_classes) * config.samples_per_class);
  for (int k = 0; k < total_classes; ++k) {
    const int label = k < config.K ? k : config.K;  // private classes collapse to K
    for (int i = 0; i < config.samples_per_class; ++i) {
      std::vector<std::vector<float>> clips(config.c);
      for (int p = 0; p < config.c; ++p) {
        clips[p] = draw_clip(means[k][p], config.cluster_std, shift, target_rng);
      }
      target_samples.emplace_back("t-" + std::to_string(k) + "-" + std::to_string(i),
                                  Domain::target, label, std::move(clips));
    }
  }

  return SynthPair{Dataset(std::move(source_samples), config.K, config.D, config.c),
                   Dataset(std::move(target_samples), config.K, config.D, config.c)};
}

VideoSample augment_with(const VideoSample& sample, const AugmentSpec& spec, Rng& rng) {
  if (spec.noise_std < 0.0 || spec.dropout_p < 0.0 || spec.scale_jitter < 0.0) {
    throw std::invalid_argument("augment: spec fields must be >= 0");
  }
  std::vector<std::vector<float>> clips = sample.clips();
  if (spec.noise_std > 0.0) {
    for (auto& clip : clips) {
      for (float& v : clip) v = static_cast<float>(v + spec.noise_std * rng.normal());
    }
  }
  if (spec.dropout_p > 0.0) {
    for (auto& clip : clips) {
      for (float& v : clip) {
        if (rng.uniform() < spec.dropout_p) v = 0.0f;
      }
    }
  }
  if (spec.scale_jitter > 0.0) {
    const double scale = rng.uniform(1.0 - spec.scale_jitter, 1.0 + spec.scale_jitter);
    for (auto& clip : clips) {
      for (float& v : clip) v = static_cast<float>(v * scale);
    }
  }
  std::optional<int> label;
  if (sample.has_label()) {
    EvaluationScope gate;  // metadata copy, not a label read on a decision path
    label = sample.ground_truth_label();
  }
  return VideoSample(sample.id(), sample.domain(), label, std::move(clips));
}

VideoSample augment(const VideoSample& sample, double strength, Rng& rng) {
  if (strength < 0.0) throw std::invalid_argument("augment: strength must be >= 0");
  if (strength == 0.0) return sample;
  return augment_with(sample, AugmentSpec{strength, strength / 2.0, strength}, rng);
}

VideoSample shuffle_clips(const VideoSample& sample, Rng& rng) {
  const int c = sample.clip_count();
  if (c < 2) throw std::invalid_argument("shuffle_clips: need at least 2 clips");
  std::vector<int> perm(c);
  bool identity = true;
  do {
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = c - 1; i > 0; --i) {
      std::swap(perm[i], perm[rng.uniform_int(i + 1)]);
    }
    identity = true;
    for (int i = 0; i < c; ++i) {
      if (perm[i] != i) { identity = false; break; }
    }
  } while (identity);

  std::vector<std::vector<float>> clips(c);
  for (int i = 0; i < c; ++i) clips[i] = sample.clips()[perm[i]];
  std::optional<int> label;
  if (sample.has_label()) {
    EvaluationScope gate;
    label = sample.ground_truth_label();
  }
  return VideoSample(sample.id(), sample.domain(), label, std::move(clips));
}

namespace {

json sample_to_json(const VideoSample& s) {
  json j;
  j["id"] = s.id();
  j["domain"] = s.domain() == Domain::source ? "source" : "target";
  if (s.has_label()) {
    j["label"] = s.ground_truth_label();
  } else {
    j["label"] = nullptr;
  }
  json clips = json::array();
  for (const auto& clip : s.clips()) {
    json row = json::array();
    for (float v : clip) row.push_back(static_cast<double>(v));
    clips.push_back(std::move(row));
  }
  j["clips"] = std::move(clips);
  return j;
}

VideoSample sample_from_json(const json& j, int line_no) {
  const auto fail = [line_no](const std::string& what) -> std::runtime_error {
    return std::runtime_error("manifest parse error at line " + std::to_string(line_no) +
                              ": " + what);
  };
  if (!j.is_object()) throw fail("expected an object");
  if (!j.contains("id") || !j["id"].is_string()) throw fail("missing string field 'id'");
  if (!j.contains("domain") || !j["domain"].is_string()) throw fail("missing field 'domain'");
  if (!j.contains("clips") || !j["clips"].is_array()) throw fail("missing array field 'clips'");
  const std::string dom = j["domain"].get<std::string>();
  if (dom != "source" && dom != "target") throw fail("domain must be 'source' or 'target'");

  std::optional<int> label;
  if (j.contains("label") && !j["label"].is_null()) {
    if (!j["label"].is_number_integer()) throw fail("label must be an integer or null");
    label = j["label"].get<int>();
  }
  std::vector<std::vector<float>> clips;
  clips.reserve(j["clips"].size());
  for (const auto& row : j["clips"]) {
    if (!row.is_array()) throw fail("each clip must be an array of numbers");
    std::vector<float> clip;
    clip.reserve(row.size());
    for (const auto& v : row) {
      if (!v.is_number()) throw fail("clip features must be numbers");
      clip.push_back(static_cast<float>(v.get<double>()));
    }
    clips.push_back(std::move(clip));
  }
  return VideoSample(j["id"].get<std::string>(),
                     dom == "source" ? Domain::source : Domain::target, label,
                     std::move(clips));
}

}  // namespace

Dataset load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest: " + path);

  std::string line;
  int line_no = 0;
  int K = -1, D = -1, c = -1;
  std::vector<VideoSample> samples;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw std::runtime_error("manifest parse error at line " + std::to_string(line_no) +
                               ": " + e.what());
    }
    if (line_no == 1) {
      if (!j.is_object() || !j.contains("K") || !j.contains("D") || !j.contains("c")) {
        throw std::runtime_error(
            "manifest parse error at line 1: header must be {\"K\":int,\"D\":int,\"c\":int}");
      }
      K = j["K"].get<int>();
      D = j["D"].get<int>();
      c = j["c"].get<int>();
      continue;
    }
    samples.push_back(sample_from_json(j, line_no));
  }
  if (line_no == 0) {
    throw std::runtime_error("manifest parse error at line 1: missing header in " + path);
  }
  return Dataset(std::move(samples), K, D, c);
}

void write_manifest(const Dataset& dataset, const std::string& path) {
  EvaluationScope gate;  // serialization may touch target ground truth
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest: " + path);
  json header;
  header["K"] = dataset.num_shared_classes();
  header["D"] = dataset.clip_dim();
  header["c"] = dataset.clips_per_video();
  out << header.dump() << '\n';
  for (const VideoSample& s : dataset.samples()) {
    out << sample_to_json(s).dump() << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<Batch> make_batches(const Dataset& source, const Dataset& target,
                                int b, std::uint64_t seed, double aug_strength) {
  if (b < 2) throw std::invalid_argument("make_batches: b must be >= 2");
  if (static_cast<int>(source.size()) < b) {
    throw std::runtime_error("make_batches: source dataset smaller than batch size " +
                             std::to_string(b));
  }
  if (static_cast<int>(target.size()) < b) {
    throw std::runtime_error("make_batches: target dataset smaller than batch size " +
                             std::to_string(b));
  }

  Rng order_rng = Rng(seed).child(0x6f726472);
  auto shuffled_indices = [&order_rng](std::size_t n) {
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = static_cast<int>(n) - 1; i > 0; --i) {
      std::swap(idx[i], idx[order_rng.uniform_int(i + 1)]);
    }
    return idx;
  };
  const std::vector<int> src_idx = shuffled_indices(source.size());
  const std::vector<int> tgt_idx = shuffled_indices(target.size());

  const int n_batches = static_cast<int>(
      std::min(source.size() / static_cast<std::size_t>(b),
               target.size() / static_cast<std::size_t>(b)));

  const Rng base(seed);
  std::uint64_t slot = 0;
  auto make_entry = [&](const Dataset& ds, int index) {
    const VideoSample& s = ds.samples()[index];
    Rng r1 = base.child(slot * 4 + 1);
    Rng r2 = base.child(slot * 4 + 2);
    Rng r3 = base.child(slot * 4 + 3);
    ++slot;
    VideoSample v1 = augment(s, aug_strength, r1);
    VideoSample v2 = augment(s, aug_strength, r2);
    VideoSample neg = shuffle_clips(v1, r3);
    return BatchEntry{index, std::move(v1), std::move(v2), std::move(neg)};
  };

  std::vector<Batch> batches(n_batches);
  for (int bi = 0; bi < n_batches; ++bi) {
    Batch& batch = batches[bi];
    batch.source.reserve(b);
    batch.target.reserve(b);
    for (int i = 0; i < b; ++i) batch.source.push_back(make_entry(source, src_idx[bi * b + i]));
    for (int i = 0; i < b; ++i) batch.target.push_back(make_entry(target, tgt_idx[bi * b + i]));
  }
  return batches;
}

}  // namespace coloseo

#include "coloseo/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <stdexcept>

#include "coloseo/data_model.hpp"
#include "coloseo/losses.hpp"
#include "coloseo/network.hpp"
#include "coloseo/rng.hpp"

namespace coloseo {

namespace {

const ModelDims kCheckDims{/*D=*/4, /*c=*/3, /*H=*/5, /*F=*/6, /*P=*/4, /*K=*/3};
constexpr int kBatch = 3;

VideoSample random_sample(Rng& rng, Domain domain, std::optional<int> label,
                          const ModelDims& dims) {
  std::vector<std::vector<float>> clips(dims.c, std::vector<float>(dims.D));
  for (auto& clip : clips) {
    for (float& v : clip) v = static_cast<float>(rng.normal());
  }
  return VideoSample("gc", domain, label, std::move(clips));
}

// One random problem instance: samples, labels and frozen open-set decisions.
struct CheckCase {
  std::vector<VideoSample> src_v1, src_v2, src_neg;
  std::vector<int> src_labels;
  std::vector<VideoSample> tgt_v1, tgt_v2, tgt_neg, tgt_plain;
  std::vector<int> pseudo_labels;   // for accepted targets
  std::vector<char> rejected;       // frozen rejection flags
};

CheckCase make_case(Rng& rng) {
  CheckCase cc;
  for (int i = 0; i < kBatch; ++i) {
    const int y = rng.uniform_int(kCheckDims.K);
    cc.src_labels.push_back(y);
    cc.src_v1.push_back(random_sample(rng, Domain::source, y, kCheckDims));
    cc.src_v2.push_back(random_sample(rng, Domain::source, y, kCheckDims));
    cc.src_neg.push_back(random_sample(rng, Domain::source, y, kCheckDims));
    cc.tgt_v1.push_back(random_sample(rng, Domain::target, std::nullopt, kCheckDims));
    cc.tgt_v2.push_back(random_sample(rng, Domain::target, std::nullopt, kCheckDims));
    cc.tgt_neg.push_back(random_sample(rng, Domain::target, std::nullopt, kCheckDims));
    cc.tgt_plain.push_back(random_sample(rng, Domain::target, std::nullopt, kCheckDims));
    // Guarantee a pseudo-label that exists in the source batch so the cross
    // loss always scores at least one anchor.
    cc.pseudo_labels.push_back(cc.src_labels[0]);
    cc.rejected.push_back(i == kBatch - 1 ? 1 : 0);  // at least one of each
  }
  return cc;
}

struct Forward {
  std::vector<NodeId> src_z;       // 2b source projections (views pooled)
  std::vector<int> src_z_labels;
  std::vector<NodeId> tgt_z1, tgt_z2;
  std::vector<TripletNodes> triplets;
  std::vector<NodeId> open_rows;
  std::vector<int> open_labels;
  std::vector<RowRole> open_roles;
  std::vector<NodeId> cross_anchors;
  std::vector<int> cross_labels;
};

Forward forward_case(Tape& tape, const ParamNodes& pn, const CheckCase& cc) {
  Forward f;
  std::vector<NodeId> h1s, h2s;
  for (int i = 0; i < kBatch; ++i) {
    const NodeId h1 = aggregate_node(tape, pn, kCheckDims, cc.src_v1[i]);
    const NodeId h2 = aggregate_node(tape, pn, kCheckDims, cc.src_v2[i]);
    const NodeId hn = aggregate_node(tape, pn, kCheckDims, cc.src_neg[i]);
    f.triplets.push_back({h1, h2, hn});
    h1s.push_back(h1);
    h2s.push_back(h2);
    f.open_rows.push_back(classify_open_node(tape, pn, kCheckDims, h1));
    f.open_labels.push_back(cc.src_labels[i]);
    f.open_roles.push_back(RowRole::known);
  }
  for (int i = 0; i < kBatch; ++i) f.src_z.push_back(project_node(tape, pn, kCheckDims, h1s[i]));
  for (int i = 0; i < kBatch; ++i) f.src_z.push_back(project_node(tape, pn, kCheckDims, h2s[i]));
  f.src_z_labels = cc.src_labels;
  f.src_z_labels.insert(f.src_z_labels.end(), cc.src_labels.begin(), cc.src_labels.end());

  for (int i = 0; i < kBatch; ++i) {
    const NodeId h1 = aggregate_node(tape, pn, kCheckDims, cc.tgt_v1[i]);
    const NodeId h2 = aggregate_node(tape, pn, kCheckDims, cc.tgt_v2[i]);
    const NodeId hn = aggregate_node(tape, pn, kCheckDims, cc.tgt_neg[i]);
    f.triplets.push_back({h1, h2, hn});
    f.tgt_z1.push_back(project_node(tape, pn, kCheckDims, h1));
    f.tgt_z2.push_back(project_node(tape, pn, kCheckDims, h2));
    if (cc.rejected[i]) {
      f.open_rows.push_back(classify_open_node(tape, pn, kCheckDims, h1));
      f.open_labels.push_back(kCheckDims.K);
      f.open_roles.push_back(RowRole::unknown);
    } else {
      const NodeId h = aggregate_node(tape, pn, kCheckDims, cc.tgt_plain[i]);
      f.cross_anchors.push_back(project_node(tape, pn, kCheckDims, h));
      f.cross_labels.push_back(cc.pseudo_labels[i]);
    }
  }
  return f;
}

// Near-zero projection norms make the cosine curvature explode and central
// differences at a fixed step meaningless, so random configurations are
// screened for well-conditioned embeddings before checking.
bool well_conditioned(const ModelParams& params, const CheckCase& cc) {
  constexpr double kNormFloor = 0.05;
  const auto z_norm = [&params](const VideoSample& s) {
    const std::vector<double> z = project(params, aggregate(params, s));
    double n = 0.0;
    for (double v : z) n += v * v;
    return std::sqrt(n);
  };
  for (int i = 0; i < kBatch; ++i) {
    if (z_norm(cc.src_v1[i]) < kNormFloor || z_norm(cc.src_v2[i]) < kNormFloor) return false;
    if (z_norm(cc.tgt_v1[i]) < kNormFloor || z_norm(cc.tgt_v2[i]) < kNormFloor) return false;
    if (!cc.rejected[i] && z_norm(cc.tgt_plain[i]) < kNormFloor) return false;
  }
  return true;
}

using LossBuilder = std::function<NodeId(Tape&, const ParamNodes&, const CheckCase&)>;

constexpr double kTau = 0.1;
constexpr double kAlpha = 1.0;
constexpr double kLambda = 0.1;

std::vector<std::pair<std::string, LossBuilder>> loss_builders() {
  return {
      {"sup",
       [](Tape& t, const ParamNodes& pn, const CheckCase& cc) {
         const Forward f = forward_case(t, pn, cc);
         return loss_sup_node(t, f.src_z, f.src_z_labels, kTau);
       }},
      {"aug",
       [](Tape& t, const ParamNodes& pn, const CheckCase& cc) {
         const Forward f = forward_case(t, pn, cc);
         return loss_aug_node(t, f.tgt_z1, f.tgt_z2, kTau);
       }},
      {"temp",
       [](Tape& t, const ParamNodes& pn, const CheckCase& cc) {
         const Forward f = forward_case(t, pn, cc);
         return loss_temp_node(t, f.triplets, kAlpha);
       }},
      {"cross",
       [](Tape& t, const ParamNodes& pn, const CheckCase& cc) {
         const Forward f = forward_case(t, pn, cc);
         return loss_cross_node(t, f.cross_anchors, f.cross_labels, f.src_z, f.src_z_labels,
                                kTau);
       }},
      {"open",
       [](Tape& t, const ParamNodes& pn, const CheckCase& cc) {
         const Forward f = forward_case(t, pn, cc);
         return loss_open_node(t, f.open_rows, f.open_labels, f.open_roles, kCheckDims.K);
       }},
      {"total",
       [](Tape& t, const ParamNodes& pn, const CheckCase& cc) {
         const Forward f = forward_case(t, pn, cc);
         LossTermNodes parts;
         parts.open = loss_open_node(t, f.open_rows, f.open_labels, f.open_roles, kCheckDims.K);
         parts.sup = loss_sup_node(t, f.src_z, f.src_z_labels, kTau);
         parts.aug = loss_aug_node(t, f.tgt_z1, f.tgt_z2, kTau);
         parts.cross = loss_cross_node(t, f.cross_anchors, f.cross_labels, f.src_z,
                                       f.src_z_labels, kTau);
         parts.temp = loss_temp_node(t, f.triplets, kAlpha);
         return total_loss_node(t, parts, kLambda);
       }},
  };
}

}  // namespace

bool GradCheckReport::passed() const {
  return std::all_of(items.begin(), items.end(),
                     [](const GradCheckItem& i) { return i.pass; });
}

std::string GradCheckReport::summary() const {
  std::string out;
  char line[256];
  for (const GradCheckItem& i : items) {
    std::snprintf(line, sizeof(line),
                  "%-6s configs=%d coords=%ld kinks=%ld max_rel_err=%.3e worst=%s %s\n",
                  i.loss_name.c_str(), i.configs, i.checked, i.skipped_kinks, i.max_rel_err,
                  i.worst_coord.c_str(), i.pass ? "OK" : "FAIL");
    out += line;
  }
  return out;
}

GradCheckReport run_gradcheck(std::uint64_t seed, int configs_per_loss, double step,
                              double tolerance, bool fault_injection) {
  if (configs_per_loss < 1) throw std::invalid_argument("gradcheck: need >= 1 config");
  GradCheckReport report;
  report.tolerance = tolerance;

  for (const auto& [name, builder] : loss_builders()) {
    GradCheckItem item;
    item.loss_name = name;
    item.configs = configs_per_loss;

    for (int cfg = 0; cfg < configs_per_loss; ++cfg) {
      ModelParams params;
      CheckCase cc;
      for (int attempt = 0; attempt < 100; ++attempt) {
        Rng rng = Rng(seed).child(std::hash<std::string>{}(name) ^
                                  (0x9000 + cfg + (attempt << 16)));
        params = init_params(kCheckDims, rng.next_u64());
        cc = make_case(rng);
        if (well_conditioned(params, cc)) break;
      }

      // analytic gradient
      Tape tape;
      const ParamNodes pn = push_params(tape, params);
      const NodeId loss = builder(tape, pn, cc);
      const std::uint64_t base_sig = tape.branch_signature();
      ModelParams grads = backward(tape, pn, kCheckDims, loss);
      std::vector<double> g_ad = flatten(grads);
      if (fault_injection && cfg == 0) g_ad[0] += 5e-3;

      // central finite differences over every coordinate
      std::vector<double> flat = flatten(params);
      for (std::size_t i = 0; i < flat.size(); ++i) {
        const double saved = flat[i];
        flat[i] = saved + step;
        Tape tp;
        const ModelParams pp = unflatten(kCheckDims, flat);
        const ParamNodes pnp = push_params(tp, pp);
        const double up = tp.value(builder(tp, pnp, cc));

        flat[i] = saved - step;
        Tape tm;
        const ModelParams pm = unflatten(kCheckDims, flat);
        const ParamNodes pnm = push_params(tm, pm);
        const double down = tm.value(builder(tm, pnm, cc));
        flat[i] = saved;

        if (tp.branch_signature() != base_sig || tm.branch_signature() != base_sig) {
          item.skipped_kinks++;
          continue;
        }
        item.checked++;
        const double g_fd = (up - down) / (2.0 * step);
        const double denom = std::max({1.0, std::abs(g_ad[i]), std::abs(g_fd)});
        const double rel = std::abs(g_ad[i] - g_fd) / denom;
        if (rel > item.max_rel_err) {
          item.max_rel_err = rel;
          item.worst_coord = coord_name(kCheckDims, i) + "@cfg" + std::to_string(cfg);
        }
      }
    }
    item.pass = item.max_rel_err <= tolerance;
    report.items.push_back(std::move(item));
  }
  return report;
}

}  // namespace coloseo

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "avgn/avct.hpp"
#include "avgn/common.hpp"
#include "avgn/tensor.hpp"

// Localization evaluation: pixel-ranking AP, IoU success + AUC for
// single-source, and the class-aware / permutation-invariant variants for
// multi-source, plus token classifier diagnostics.

namespace avgn {

// One evaluated sample: a map per source plus its rasterized ground truth.
// maps[i] is the map conditioned on gt_classes[i].
struct EvalRecord {
  std::vector<Tensor<double>> maps;       // per source, H x W
  std::vector<Tensor<uint8_t>> gt_masks;  // per source, H x W binary
  std::vector<int> gt_classes;
  std::vector<int> pred_classes;  // optional (prediction-driven selection)
};

struct EvalReport {
  double ap = 0.0;
  double iou_success_rate = 0.0;
  double auc = 0.0;
  double cap = 0.0;
  double piap = 0.0;
  double ciou_success_rate = 0.0;
  double bin_theta = 0.5;
  double iou_tau = 0.5;
  double ciou_tau = 0.3;

  nlohmann::json to_json() const {
    return {{"ap", ap},
            {"iou_success_rate", iou_success_rate},
            {"auc", auc},
            {"cap", cap},
            {"piap", piap},
            {"ciou_success_rate", ciou_success_rate},
            {"bin_theta", bin_theta},
            {"iou_tau", iou_tau},
            {"ciou_tau", ciou_tau}};
  }
};

inline double iou_score(const Tensor<uint8_t>& pred, const Tensor<uint8_t>& gt) {
  require(pred.same_shape(gt), "iou_score: shape mismatch");
  int64_t inter = 0, uni = 0;
  for (int64_t i = 0; i < pred.numel(); ++i) {
    const bool p = pred[i] != 0, g = gt[i] != 0;
    inter += p && g;
    uni += p || g;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// min-max normalize then threshold; constant maps binarize to empty
inline Tensor<uint8_t> binarize_map(const Tensor<double>& map, double theta) {
  require(map.all_finite(), "binarize_map: non-finite map");
  double lo = map[0], hi = map[0];
  for (int64_t i = 0; i < map.numel(); ++i) {
    lo = std::min(lo, map[i]);
    hi = std::max(hi, map[i]);
  }
  Tensor<uint8_t> mask(map.shape);
  if (hi <= lo) return mask;
  for (int64_t i = 0; i < map.numel(); ++i)
    mask[i] = ((map[i] - lo) / (hi - lo) >= theta) ? 1 : 0;
  return mask;
}

// Ranks pixels by map value descending (ties broken by row-major pixel
// order); AP is the mean over positives of precision at each positive's rank.
inline double pixel_ap(const Tensor<double>& map, const Tensor<uint8_t>& gt_mask) {
  require(map.same_shape_sizes(gt_mask), "pixel_ap: shape mismatch");
  int64_t positives = 0;
  for (int64_t i = 0; i < gt_mask.numel(); ++i) positives += gt_mask[i] != 0;
  require(positives >= 1, "pixel_ap: ground truth has no positive pixels");

  std::vector<int64_t> order(static_cast<size_t>(map.numel()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&map](int64_t a, int64_t b) {
    if (map[a] != map[b]) return map[a] > map[b];
    return a < b;
  });
  double ap = 0.0;
  int64_t hit = 0;
  for (size_t rank = 0; rank < order.size(); ++rank) {
    if (gt_mask[order[rank]] != 0) {
      ++hit;
      ap += static_cast<double>(hit) / static_cast<double>(rank + 1);
    }
  }
  return ap / static_cast<double>(positives);
}

// nonincreasing success curve over IoU thresholds
inline std::vector<double> success_curve(const std::vector<double>& ious,
                                         const std::vector<double>& thresholds) {
  require(!ious.empty(), "success_curve: empty record set");
  std::vector<double> curve;
  curve.reserve(thresholds.size());
  for (double t : thresholds) {
    int64_t n = 0;
    for (double v : ious) n += v >= t;
    curve.push_back(static_cast<double>(n) / static_cast<double>(ious.size()));
  }
  return curve;
}

inline double trapezoid_auc(const std::vector<double>& thresholds,
                            const std::vector<double>& curve) {
  require(thresholds.size() == curve.size() && thresholds.size() >= 2, "auc: bad curve");
  double area = 0.0;
  for (size_t i = 0; i + 1 < thresholds.size(); ++i) {
    require(thresholds[i + 1] >= thresholds[i], "auc: thresholds must be ascending");
    area += (thresholds[i + 1] - thresholds[i]) * 0.5 * (curve[i] + curve[i + 1]);
  }
  return area;
}

inline std::vector<double> default_iou_thresholds() {
  std::vector<double> t;
  for (int i = 0; i <= 20; ++i) t.push_back(0.05 * i);
  return t;
}

// Single-source protocol: one map/mask per record.
struct SuccessAuc {
  double success = 0.0;
  double auc = 0.0;
};

inline SuccessAuc success_and_auc(const std::vector<EvalRecord>& records, double bin_theta,
                                  double tau_star,
                                  const std::vector<double>& thresholds = default_iou_thresholds()) {
  require(!records.empty(), "success_and_auc: empty record set");
  std::vector<double> ious;
  for (const EvalRecord& r : records) {
    require(!r.maps.empty(), "success_and_auc: record without maps");
    ious.push_back(iou_score(binarize_map(r.maps[0], bin_theta), r.gt_masks[0]));
  }
  const std::vector<double> curve = success_curve(ious, thresholds);
  SuccessAuc out;
  int64_t n = 0;
  for (double v : ious) n += v >= tau_star;
  out.success = static_cast<double>(n) / static_cast<double>(ious.size());
  out.auc = trapezoid_auc(thresholds, curve);
  return out;
}

// CAP: pool per-category (map, mask) pairs across records, average pixel_ap
// within each category, then macro-average over categories present.
inline double class_aware_ap(const std::vector<EvalRecord>& records) {
  std::map<int, std::pair<double, int64_t>> per_cat;  // class -> (ap sum, count)
  for (const EvalRecord& r : records) {
    for (size_t i = 0; i < r.maps.size(); ++i) {
      bool any = false;
      for (int64_t k = 0; k < r.gt_masks[i].numel(); ++k)
        if (r.gt_masks[i][k] != 0) { any = true; break; }
      if (!any) continue;
      auto& slot = per_cat[r.gt_classes[i]];
      slot.first += pixel_ap(r.maps[i], r.gt_masks[i]);
      slot.second += 1;
    }
  }
  if (per_cat.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& [cls, slot] : per_cat) acc += slot.first / static_cast<double>(slot.second);
  return acc / static_cast<double>(per_cat.size());
}

// PIAP: best assignment of predicted maps to ground-truth masks per record
// (exhaustive over permutations, N <= 4), averaged over records.
inline double permutation_invariant_ap(const std::vector<EvalRecord>& records) {
  require(!records.empty(), "permutation_invariant_ap: empty record set");
  double acc = 0.0;
  for (const EvalRecord& r : records) {
    const size_t n = r.maps.size();
    require(n >= 1, "permutation_invariant_ap: record without maps");
    require(n <= 4, "permutation_invariant_ap: more than 4 sources unsupported");
    std::vector<size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = -1.0;
    do {
      double mean_ap = 0.0;
      for (size_t k = 0; k < n; ++k) mean_ap += pixel_ap(r.maps[perm[k]], r.gt_masks[k]);
      best = std::max(best, mean_ap / static_cast<double>(n));
    } while (std::next_permutation(perm.begin(), perm.end()));
    acc += best;
  }
  return acc / static_cast<double>(records.size());
}

// per-sample CIoU success: every source's class-conditioned map must reach
// IoU >= tau against that source's mask
inline std::vector<double> ciou_per_sample_min_iou(const std::vector<EvalRecord>& records,
                                                   double bin_theta) {
  std::vector<double> worst;
  for (const EvalRecord& r : records) {
    double w = 1.0;
    for (size_t i = 0; i < r.maps.size(); ++i)
      w = std::min(w, iou_score(binarize_map(r.maps[i], bin_theta), r.gt_masks[i]));
    worst.push_back(w);
  }
  return worst;
}

inline double ciou_success(const std::vector<EvalRecord>& records, double bin_theta,
                           double tau_star) {
  require(!records.empty(), "ciou_success: empty record set");
  const std::vector<double> worst = ciou_per_sample_min_iou(records, bin_theta);
  int64_t ok = 0;
  for (double w : worst) ok += w >= tau_star;
  return static_cast<double>(ok) / static_cast<double>(worst.size());
}

struct TokenDiagnostics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// argmax(e_i) == i counts as correct; macro averages over categories with
// 0/0 precision guarded to 0
template <typename T>
TokenDiagnostics token_diagnostics(const TokenClassOutput<T>& out) {
  const Tensor<T>& p = out.probabilities;
  require(p.rank() == 2 && p.dim(0) == p.dim(1), "token_diagnostics: square matrix required");
  const int64_t c = p.dim(0);
  std::vector<int64_t> pred(static_cast<size_t>(c));
  for (int64_t i = 0; i < c; ++i) {
    int64_t arg = 0;
    for (int64_t j = 1; j < c; ++j)
      if (p.at(i, j) > p.at(i, arg)) arg = j;
    pred[static_cast<size_t>(i)] = arg;
  }
  double prec = 0.0, rec = 0.0, f1 = 0.0;
  for (int64_t cls = 0; cls < c; ++cls) {
    int64_t tp = 0, predicted = 0;
    for (int64_t i = 0; i < c; ++i) {
      if (pred[static_cast<size_t>(i)] == cls) {
        ++predicted;
        tp += i == cls;
      }
    }
    const double pc = predicted == 0 ? 0.0 : static_cast<double>(tp) / predicted;
    const double rc = static_cast<double>(tp);  // one true item per class
    prec += pc;
    rec += rc;
    f1 += (pc + rc) > 0.0 ? 2.0 * pc * rc / (pc + rc) : 0.0;
  }
  return {prec / static_cast<double>(c), rec / static_cast<double>(c), f1 / static_cast<double>(c)};
}

}  // namespace avgn

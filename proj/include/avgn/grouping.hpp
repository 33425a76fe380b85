#pragma once

#include <utility>
#include <vector>

#include "avgn/avct.hpp"
#include "avgn/graph.hpp"
#include "avgn/random.hpp"
#include "avgn/tensor.hpp"

// Audio-visual grouping: assign each feature row across the category axis,
// aggregate assigned features into per-category embeddings, and read out
// per-class presence probabilities.

namespace avgn {

enum class AssignMode { kSoft, kHardGumbel };

inline constexpr double kGroupDenomFloor = 1e-8;
inline constexpr double kGumbelTemperature = 1.0;

template <typename T>
struct GroupingWeights {
  Tensor<T> w_q, w_k, w_v, w_o;  // each [D, D]

  static GroupingWeights init(int dim, Rng& rng) {
    GroupingWeights w;
    const double std = std::sqrt(1.0 / dim);
    for (Tensor<T>* t : {&w.w_q, &w.w_k, &w.w_v, &w.w_o}) {
      *t = Tensor<T>({dim, dim});
      for (int64_t i = 0; i < t->numel(); ++i) (*t)[i] = static_cast<T>(rng.gaussian(0.0, std));
    }
    return w;
  }

  static GroupingWeights identity(int dim) {
    GroupingWeights w;
    for (Tensor<T>* t : {&w.w_q, &w.w_k, &w.w_v, &w.w_o}) {
      *t = Tensor<T>({dim, dim});
      for (int i = 0; i < dim; ++i) t->at(i, i) = T(1);
    }
    return w;
  }
};

// Rows sum to 1; in hard mode every row is exactly one-hot.
template <typename T>
struct AssignmentMatrix {
  Tensor<T> values;  // [M', C]
  AssignMode mode = AssignMode::kSoft;
};

template <typename T>
struct GroupedEmbeddings {
  Tensor<T> audio;   // [C, D]
  Tensor<T> visual;  // [C, D]
};

template <typename T>
struct SourcePresence {
  Tensor<T> probabilities;  // [C]
};

namespace grp {

template <typename T>
struct GroupVars {
  int w_q, w_k, w_v, w_o;
};

template <typename T>
GroupVars<T> to_graph(ad::Graph<T>& g, const GroupingWeights<T>& w, bool needs_grad) {
  return {g.leaf(w.w_q, needs_grad), g.leaf(w.w_k, needs_grad), g.leaf(w.w_v, needs_grad),
          g.leaf(w.w_o, needs_grad)};
}

// logits[m,i] = (W_q f_m) . (W_k c_i); softmax across the category axis.
// Hard mode samples Gumbel noise (straight-through one-hot forward).
template <typename T>
int assignment_node(ad::Graph<T>& g, int feats, int tokens, const GroupVars<T>& w,
                    AssignMode mode, Rng* rng) {
  const int q = g.matmul(feats, w.w_q, false, true);
  const int k = g.matmul(tokens, w.w_k, false, true);
  const int logits = g.matmul(q, k, false, true);  // [M', C]
  if (mode == AssignMode::kSoft) return g.softmax_last(logits);
  require(rng != nullptr, "assignment: hard-gumbel mode needs an RNG");
  Tensor<T> noise(g.val(logits).shape);
  for (int64_t i = 0; i < noise.numel(); ++i) noise[i] = static_cast<T>(rng->gumbel());
  return g.hard_softmax_st(logits, noise, static_cast<T>(kGumbelTemperature));
}

// g_i = c_i + W_o (sum_m A[m,i] W_v f_m) / max(sum_m A[m,i], floor)
template <typename T>
int group_node(ad::Graph<T>& g, int feats, int assign, int tokens, const GroupVars<T>& w) {
  const int v = g.matmul(feats, w.w_v, false, true);      // [M', D]
  const int numer = g.matmul(assign, v, true, false);     // [C, D]
  const int denom = g.colsum(assign);                     // [C]
  const int ratio = g.div_colvec_guarded(numer, denom, static_cast<T>(kGroupDenomFloor));
  return g.add(tokens, g.matmul(ratio, w.w_o, false, true));
}

// presence probabilities [C] from grouped embeddings [C, D]
template <typename T>
int presence_node(ad::Graph<T>& g, int grouped, int head_w, int head_b) {
  const int64_t c = g.val(grouped).dim(0);
  return g.reshape(g.sigmoid(g.linear(grouped, head_w, head_b)), {c});
}

}  // namespace grp

// Spec-surface wrappers ------------------------------------------------------

template <typename T>
AssignmentMatrix<T> compute_assignment(const Tensor<T>& features, const Tensor<T>& attended_tokens,
                                       const GroupingWeights<T>& weights,
                                       AssignMode mode = AssignMode::kSoft, Rng* rng = nullptr) {
  require(features.rank() == 2 && attended_tokens.rank() == 2 &&
              features.dim(1) == attended_tokens.dim(1),
          "compute_assignment: shape mismatch");
  ad::Graph<T> g;
  const auto vars = grp::to_graph(g, weights, false);
  const int a = grp::assignment_node(g, g.leaf(features, false), g.leaf(attended_tokens, false),
                                     vars, mode, rng);
  AssignmentMatrix<T> out;
  out.values = g.val(a);
  out.mode = mode;
  return out;
}

template <typename T>
Tensor<T> group_features(const Tensor<T>& features, const AssignmentMatrix<T>& assignment,
                         const Tensor<T>& attended_tokens, const GroupingWeights<T>& weights) {
  require(assignment.values.dim(0) == features.dim(0) &&
              assignment.values.dim(1) == attended_tokens.dim(0),
          "group_features: assignment shape mismatch");
  ad::Graph<T> g;
  const auto vars = grp::to_graph(g, weights, false);
  const int out =
      grp::group_node(g, g.leaf(features, false), g.leaf(assignment.values, false),
                      g.leaf(attended_tokens, false), vars);
  return g.val(out);
}

template <typename T>
SourcePresence<T> class_probability(const Tensor<T>& grouped, const ClassifierWeights<T>& head) {
  require(head.w.dim(0) == 1 && head.w.dim(1) == grouped.dim(1),
          "class_probability: head maps D -> 1");
  ad::Graph<T> g;
  const int p = grp::presence_node(g, g.leaf(grouped, false), g.leaf(head.w, false),
                                   g.leaf(head.b, false));
  SourcePresence<T> out;
  out.probabilities = g.val(p);
  return out;
}

// ascending category order of the positive labels
inline std::vector<int64_t> selected_categories(const std::vector<int>& labels) {
  std::vector<int64_t> idx;
  for (size_t i = 0; i < labels.size(); ++i)
    if (labels[i] != 0) idx.push_back(static_cast<int64_t>(i));
  require(!idx.empty(), "select_sources: all-zero label vector");
  return idx;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> select_sources(const GroupedEmbeddings<T>& grouped,
                                               const std::vector<int>& labels) {
  const std::vector<int64_t> idx = selected_categories(labels);
  require(static_cast<int64_t>(labels.size()) == grouped.audio.dim(0),
          "select_sources: label length != C");
  const int64_t n = static_cast<int64_t>(idx.size()), d = grouped.audio.dim(1);
  Tensor<T> a({n, d}), v({n, d});
  for (int64_t k = 0; k < n; ++k)
    for (int64_t j = 0; j < d; ++j) {
      a.at(k, j) = grouped.audio.at(idx[static_cast<size_t>(k)], j);
      v.at(k, j) = grouped.visual.at(idx[static_cast<size_t>(k)], j);
    }
  return {std::move(a), std::move(v)};
}

}  // namespace avgn

#pragma once

#include <vector>

#include "avgn/avct.hpp"
#include "avgn/graph.hpp"
#include "avgn/grouping.hpp"
#include "avgn/tensor.hpp"

// Training objectives: multiple-instance contrastive baseline, grouping loss
// (token CE + presence BCEs), class-aware localization loss, and their sum.

namespace avgn {

template <typename T>
struct LossConfig {
  T temperature = T(0.07);
};

inline constexpr double kLogFloor = 1e-12;

namespace obj {

// Builds the contrastive term over a precomputed [B,B] similarity matrix
// node: mean_b( logsumexp_m(S[b,m]/tau) - S[b,b]/tau ).
template <typename T>
int contrastive_from_sims(ad::Graph<T>& g, int sims, T tau) {
  const int scaled = g.scale(sims, T(1) / tau);
  const int lse = g.logsumexp_rows(scaled);
  const int diag = g.gather_diag(scaled);
  return g.mean_all(g.sub(lse, diag));
}

// audio[b]: [1,D] node, visual[m]: [P,D] node; s[b,m] = max-pooled cosine
template <typename T>
int similarity_matrix(ad::Graph<T>& g, const std::vector<int>& audio,
                      const std::vector<int>& visual) {
  const int64_t b = static_cast<int64_t>(audio.size());
  std::vector<int> cells;
  cells.reserve(static_cast<size_t>(b * b));
  for (int64_t i = 0; i < b; ++i)
    for (int64_t j = 0; j < b; ++j)
      cells.push_back(g.maxcos(audio[static_cast<size_t>(i)], visual[static_cast<size_t>(j)]));
  return g.reshape(g.stack_scalars(cells), {b, b});
}

template <typename T>
int micl_node(ad::Graph<T>& g, const std::vector<int>& audio, const std::vector<int>& visual,
              T tau) {
  require(!audio.empty() && audio.size() == visual.size(), "micl: batch mismatch");
  return contrastive_from_sims(g, similarity_matrix(g, audio, visual), tau);
}

// audio[b][n]: [1,D] node, visual[b][n]: [P,D] node. Anchors run over (b,n);
// negatives run over the batch index at the anchor's slot.
template <typename T>
int localization_node(ad::Graph<T>& g, const std::vector<std::vector<int>>& audio,
                      const std::vector<std::vector<int>>& visual, T tau) {
  require(!audio.empty() && audio.size() == visual.size(), "localization: batch mismatch");
  const size_t slots = audio[0].size();
  for (const auto& row : audio) require(row.size() == slots, "localization: ragged source slots");
  for (const auto& row : visual) require(row.size() == slots, "localization: ragged source slots");
  require(slots >= 1, "localization: at least one source slot");

  std::vector<int> per_slot;
  for (size_t n = 0; n < slots; ++n) {
    std::vector<int> a, v;
    for (size_t b = 0; b < audio.size(); ++b) {
      a.push_back(audio[b][n]);
      v.push_back(visual[b][n]);
    }
    per_slot.push_back(contrastive_from_sims(g, similarity_matrix(g, a, v), tau));
  }
  return g.mean_all(g.stack_scalars(per_slot));
}

// per-sample grouping loss: sum_i CE(h_i, e_i) + BCE(y_i, p^a_i) + BCE(y_i, p^v_i)
template <typename T>
int group_loss_node(ad::Graph<T>& g, int token_probs, int presence_audio, int presence_visual,
                    const std::vector<int>& labels) {
  Tensor<T> y({static_cast<int64_t>(labels.size())});
  for (size_t i = 0; i < labels.size(); ++i) y[static_cast<int64_t>(i)] = static_cast<T>(labels[i]);
  const int ce = g.ce_identity_rows(token_probs, static_cast<T>(kLogFloor));
  const int ba = g.bce_sum(presence_audio, y, static_cast<T>(kLogFloor));
  const int bv = g.bce_sum(presence_visual, y, static_cast<T>(kLogFloor));
  return g.add(ce, g.add(ba, bv));
}

}  // namespace obj

// Spec-surface wrappers ------------------------------------------------------

// max over spatial locations of cosine(audio, visual_p)
template <typename T>
T pairwise_sim(const Tensor<T>& audio, const Tensor<T>& visual) {
  require(visual.rank() == 2 && audio.numel() == visual.dim(1), "pairwise_sim: shape mismatch");
  ad::Graph<T> g;
  return g.val(g.maxcos(g.leaf(audio, false), g.leaf(visual, false)))[0];
}

template <typename T>
T micl_loss(const std::vector<Tensor<T>>& audio_batch, const std::vector<Tensor<T>>& visual_batch,
            const LossConfig<T>& cfg = {}) {
  require(!audio_batch.empty() && audio_batch.size() == visual_batch.size(),
          "micl_loss: batch mismatch");
  ad::Graph<T> g;
  std::vector<int> a, v;
  for (const auto& t : audio_batch) a.push_back(g.leaf(t, false));
  for (const auto& t : visual_batch) v.push_back(g.leaf(t, false));
  return g.val(obj::micl_node(g, a, v, cfg.temperature))[0];
}

// class-aware pair for one (sample, source): audio row g_n^a and the masked
// spatial rows {f^v_p (*) g_n^v}
template <typename T>
struct ClassAwarePair {
  Tensor<T> audio;   // [1, D]
  Tensor<T> visual;  // [P, D]
};

template <typename T>
ClassAwarePair<T> make_class_aware_pair(const Tensor<T>& grouped_audio_row,
                                        const Tensor<T>& raw_visual,
                                        const Tensor<T>& grouped_visual_row) {
  require(raw_visual.rank() == 2 && grouped_visual_row.numel() == raw_visual.dim(1),
          "class_aware_pair: shape mismatch");
  ClassAwarePair<T> p;
  p.audio = grouped_audio_row;
  p.audio.shape = {1, grouped_audio_row.numel()};
  p.visual = raw_visual;
  for (int64_t i = 0; i < raw_visual.dim(0); ++i)
    for (int64_t j = 0; j < raw_visual.dim(1); ++j) p.visual.at(i, j) *= grouped_visual_row[j];
  return p;
}

template <typename T>
T localization_loss(const std::vector<std::vector<ClassAwarePair<T>>>& pairs,
                    const LossConfig<T>& cfg = {}) {
  require(!pairs.empty(), "localization_loss: empty batch");
  ad::Graph<T> g;
  std::vector<std::vector<int>> a(pairs.size()), v(pairs.size());
  for (size_t b = 0; b < pairs.size(); ++b)
    for (const auto& p : pairs[b]) {
      a[b].push_back(g.leaf(p.audio, false));
      v[b].push_back(g.leaf(p.visual, false));
    }
  return g.val(obj::localization_node(g, a, v, cfg.temperature))[0];
}

template <typename T>
T group_loss(const TokenClassOutput<T>& token_out, const SourcePresence<T>& audio_presence,
             const SourcePresence<T>& visual_presence, const std::vector<int>& labels) {
  require(audio_presence.probabilities.numel() == static_cast<int64_t>(labels.size()) &&
              visual_presence.probabilities.numel() == static_cast<int64_t>(labels.size()),
          "group_loss: label length mismatch");
  ad::Graph<T> g;
  const int node = obj::group_loss_node(
      g, g.leaf(token_out.probabilities, false), g.leaf(audio_presence.probabilities, false),
      g.leaf(visual_presence.probabilities, false), labels);
  return g.val(node)[0];
}

template <typename T>
T total_loss(T localization, T grouping) {
  require(std::isfinite(static_cast<double>(localization)) &&
              std::isfinite(static_cast<double>(grouping)),
          "total_loss: non-finite term");
  return localization + grouping;
}

}  // namespace avgn

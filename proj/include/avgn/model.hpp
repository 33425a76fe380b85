#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "avgn/avct.hpp"
#include "avgn/encoders.hpp"
#include "avgn/graph.hpp"
#include "avgn/grouping.hpp"
#include "avgn/localize.hpp"
#include "avgn/objective.hpp"
#include "avgn/synth.hpp"

// Full network: two encoders, one shared token bank, per-modality attention
// stacks, per-modality grouping blocks and presence heads, with the ablation
// wiring switched by the avct/avg flags:
//   both off  - Eq. 1 contrastive on raw encoder features
//   avct only - attention + token CE, contrastive on attended features
//   avg only  - grouping of raw features with raw tokens
//   both on   - full objective (localization + grouping loss)

namespace avgn {

struct ModelConfig {
  int dim = 64;
  int categories = 4;
  int depth = 3;
  AttnBlock attn_block = AttnBlock::kFullBlock;
  AssignMode assignment = AssignMode::kSoft;
  bool avct_on = true;
  bool avg_on = true;
  double temperature = 0.07;
};

template <typename T>
struct AvgnModel {
  ModelConfig cfg;
  EncoderWeights<T> audio_encoder;
  EncoderWeights<T> visual_encoder;
  ClassTokens<T> tokens;
  AttentionWeights<T> attn_audio;
  AttentionWeights<T> attn_visual;
  ClassifierWeights<T> token_head;       // D -> C
  GroupingWeights<T> group_audio;
  GroupingWeights<T> group_visual;
  ClassifierWeights<T> presence_audio;   // D -> 1
  ClassifierWeights<T> presence_visual;  // D -> 1

  static AvgnModel init(const ModelConfig& cfg, uint64_t seed) {
    Rng rng(derive_seed(seed, 0xA11));
    AvgnModel m;
    m.cfg = cfg;
    m.audio_encoder = EncoderWeights<T>::init(1, cfg.dim, rng);
    m.visual_encoder = EncoderWeights<T>::init(3, cfg.dim, rng);
    m.tokens = ClassTokens<T>::init(cfg.categories, cfg.dim, rng);
    m.attn_audio = AttentionWeights<T>::init(cfg.dim, cfg.depth, rng);
    m.attn_visual = AttentionWeights<T>::init(cfg.dim, cfg.depth, rng);
    m.token_head = ClassifierWeights<T>::init(cfg.categories, cfg.dim, rng);
    m.group_audio = GroupingWeights<T>::init(cfg.dim, rng);
    m.group_visual = GroupingWeights<T>::init(cfg.dim, rng);
    m.presence_audio = ClassifierWeights<T>::init(1, cfg.dim, rng);
    m.presence_visual = ClassifierWeights<T>::init(1, cfg.dim, rng);
    return m;
  }

  // fixed traversal order; checkpoint layout and optimizer state depend on it
  template <typename F>
  void for_each_param(F&& fn) {
    auto enc = [&](const std::string& prefix, EncoderWeights<T>& e) {
      for (size_t l = 0; l < e.layers.size(); ++l) {
        fn(prefix + ".conv" + std::to_string(l) + ".w", e.layers[l].w);
        fn(prefix + ".conv" + std::to_string(l) + ".b", e.layers[l].b);
      }
    };
    auto attn = [&](const std::string& prefix, AttentionWeights<T>& a) {
      for (size_t l = 0; l < a.layers.size(); ++l) {
        const std::string base = prefix + ".layer" + std::to_string(l);
        fn(base + ".w1", a.layers[l].w1);
        fn(base + ".b1", a.layers[l].b1);
        fn(base + ".w2", a.layers[l].w2);
        fn(base + ".b2", a.layers[l].b2);
      }
    };
    auto grpw = [&](const std::string& prefix, GroupingWeights<T>& w) {
      fn(prefix + ".w_q", w.w_q);
      fn(prefix + ".w_k", w.w_k);
      fn(prefix + ".w_v", w.w_v);
      fn(prefix + ".w_o", w.w_o);
    };
    enc("audio_encoder", audio_encoder);
    enc("visual_encoder", visual_encoder);
    fn("tokens", tokens.tokens);
    attn("attn_audio", attn_audio);
    attn("attn_visual", attn_visual);
    fn("token_head.w", token_head.w);
    fn("token_head.b", token_head.b);
    grpw("group_audio", group_audio);
    grpw("group_visual", group_visual);
    fn("presence_audio.w", presence_audio.w);
    fn("presence_audio.b", presence_audio.b);
    fn("presence_visual.w", presence_visual.w);
    fn("presence_visual.b", presence_visual.b);
  }

  template <typename F>
  void for_each_param(F&& fn) const {
    const_cast<AvgnModel*>(this)->for_each_param(
        [&](const std::string& name, Tensor<T>& t) { fn(name, static_cast<const Tensor<T>&>(t)); });
  }
};

// One homogeneous training batch (every sample has the same source count).
template <typename T>
struct Batch {
  Tensor<T> audio;   // [B, 1, F, Tt], normalized
  Tensor<T> visual;  // [B, 3, H, W], normalized
  std::vector<std::vector<int>> labels;        // per sample, length C
  std::vector<std::vector<int64_t>> selected;  // per sample, ascending categories
  int grid_h = 0, grid_w = 0;
};

struct StftParams {
  double window_ms = 50.0;
  double hop_ms = 25.0;
  int fft_size = 512;
  double floor_eps = 1e-5;
};

namespace model {

template <typename T>
struct ModelVars {
  enc::EncoderVars<T> audio_enc, visual_enc;
  int tokens = -1;
  avct::AttnVars<T> attn_audio, attn_visual;
  int token_head_w = -1, token_head_b = -1;
  grp::GroupVars<T> grp_audio{-1, -1, -1, -1}, grp_visual{-1, -1, -1, -1};
  int pres_a_w = -1, pres_a_b = -1, pres_v_w = -1, pres_v_b = -1;
  std::vector<std::pair<std::string, int>> ordered;  // (param name, leaf id)
};

template <typename T>
ModelVars<T> to_graph(ad::Graph<T>& g, const AvgnModel<T>& m, bool needs_grad) {
  ModelVars<T> v;
  std::map<std::string, int> ids;
  m.for_each_param([&](const std::string& name, const Tensor<T>& t) {
    const int id = g.leaf(t, needs_grad);
    ids[name] = id;
    v.ordered.push_back({name, id});
  });
  const size_t enc_layers = m.audio_encoder.layers.size();
  for (size_t l = 0; l < enc_layers; ++l) {
    v.audio_enc.layers.push_back({ids["audio_encoder.conv" + std::to_string(l) + ".w"],
                                  ids["audio_encoder.conv" + std::to_string(l) + ".b"]});
    v.visual_enc.layers.push_back({ids["visual_encoder.conv" + std::to_string(l) + ".w"],
                                   ids["visual_encoder.conv" + std::to_string(l) + ".b"]});
  }
  v.tokens = ids["tokens"];
  for (size_t l = 0; l < m.attn_audio.layers.size(); ++l) {
    const std::string a = "attn_audio.layer" + std::to_string(l);
    const std::string b = "attn_visual.layer" + std::to_string(l);
    v.attn_audio.layers.push_back({ids[a + ".w1"], ids[a + ".b1"], ids[a + ".w2"], ids[a + ".b2"]});
    v.attn_visual.layers.push_back({ids[b + ".w1"], ids[b + ".b1"], ids[b + ".w2"], ids[b + ".b2"]});
  }
  v.token_head_w = ids["token_head.w"];
  v.token_head_b = ids["token_head.b"];
  v.grp_audio = {ids["group_audio.w_q"], ids["group_audio.w_k"], ids["group_audio.w_v"],
                 ids["group_audio.w_o"]};
  v.grp_visual = {ids["group_visual.w_q"], ids["group_visual.w_k"], ids["group_visual.w_v"],
                  ids["group_visual.w_o"]};
  v.pres_a_w = ids["presence_audio.w"];
  v.pres_a_b = ids["presence_audio.b"];
  v.pres_v_w = ids["presence_visual.w"];
  v.pres_v_b = ids["presence_visual.b"];
  return v;
}

template <typename T>
struct TrainNodes {
  int loss_total = -1;
  int loss_loc = -1;    // contrastive part (Eq. 1 or Eq. 10)
  int loss_group = -1;  // CE (+ BCEs when grouping is on); -1 when baseline
};

// Builds the full training graph for one batch.
template <typename T>
TrainNodes<T> training_graph(ad::Graph<T>& g, const ModelVars<T>& v, const ModelConfig& cfg,
                             const Batch<T>& batch, Rng* gumbel_rng) {
  const int64_t nb = batch.audio.dim(0);
  const int64_t dim = cfg.dim;
  const T tau = static_cast<T>(cfg.temperature);

  // encoders
  const int audio_feat = g.gap2d(enc::conv_stack(g, v.audio_enc, g.leaf(batch.audio, false)));
  const int visual_grid = enc::conv_stack(g, v.visual_enc, g.leaf(batch.visual, false));
  const int visual_rows = g.chw_to_rows(visual_grid);  // [B, P, D]
  const int audio_rows3 = g.reshape(audio_feat, {nb, 1, dim});

  TrainNodes<T> out;

  if (!cfg.avct_on && !cfg.avg_on) {
    std::vector<int> a, vis;
    for (int64_t b = 0; b < nb; ++b) {
      a.push_back(g.batch_of(audio_rows3, b));
      vis.push_back(g.batch_of(visual_rows, b));
    }
    out.loss_loc = obj::micl_node(g, a, vis, tau);
    out.loss_total = out.loss_loc;
    return out;
  }

  // attention refinement and token constraint
  int feats_a = audio_rows3, feats_v = visual_rows;
  int tok_a3 = -1, tok_v3 = -1;  // [B, C, D] when avct is on
  int token_ce = -1;
  if (cfg.avct_on) {
    auto [fa, ta] = avct::attend_nodes(g, audio_rows3, v.tokens, v.attn_audio, cfg.attn_block);
    auto [fv, tv] = avct::attend_nodes(g, visual_rows, v.tokens, v.attn_visual, cfg.attn_block);
    feats_a = fa;
    feats_v = fv;
    tok_a3 = ta;
    tok_v3 = tv;
  }
  token_ce = avct::token_ce_node(
      g, avct::token_probs_node(g, v.tokens, v.token_head_w, v.token_head_b));

  if (!cfg.avg_on) {
    // attention + token CE; contrastive on attended features
    std::vector<int> a, vis;
    for (int64_t b = 0; b < nb; ++b) {
      a.push_back(g.batch_of(feats_a, b));
      vis.push_back(g.batch_of(feats_v, b));
    }
    out.loss_loc = obj::micl_node(g, a, vis, tau);
    out.loss_group = token_ce;
    out.loss_total = g.add(out.loss_loc, out.loss_group);
    return out;
  }

  // grouping per sample
  std::vector<std::vector<int>> loc_audio(static_cast<size_t>(nb));
  std::vector<std::vector<int>> loc_visual(static_cast<size_t>(nb));
  std::vector<int> group_terms;
  for (int64_t b = 0; b < nb; ++b) {
    const int fa_b = g.batch_of(feats_a, b);        // [1, D]
    const int fv_b = g.batch_of(feats_v, b);        // [P, D]
    const int raw_v_b = g.batch_of(visual_rows, b); // [P, D] (raw, pre-attention)
    const int tok_ab = cfg.avct_on ? g.batch_of(tok_a3, b) : v.tokens;
    const int tok_vb = cfg.avct_on ? g.batch_of(tok_v3, b) : v.tokens;

    const int assign_a =
        grp::assignment_node(g, fa_b, tok_ab, v.grp_audio, cfg.assignment, gumbel_rng);
    const int assign_v =
        grp::assignment_node(g, fv_b, tok_vb, v.grp_visual, cfg.assignment, gumbel_rng);
    const int g_a = grp::group_node(g, fa_b, assign_a, tok_ab, v.grp_audio);  // [C, D]
    const int g_v = grp::group_node(g, fv_b, assign_v, tok_vb, v.grp_visual);

    const int p_a = grp::presence_node(g, g_a, v.pres_a_w, v.pres_a_b);
    const int p_v = grp::presence_node(g, g_v, v.pres_v_w, v.pres_v_b);
    group_terms.push_back(
        obj::group_loss_node(g, avct::token_probs_node(g, v.tokens, v.token_head_w, v.token_head_b),
                             p_a, p_v, batch.labels[static_cast<size_t>(b)]));

    const int sel_a = g.gather_rows(g_a, batch.selected[static_cast<size_t>(b)]);
    const int sel_v = g.gather_rows(g_v, batch.selected[static_cast<size_t>(b)]);
    for (size_t n = 0; n < batch.selected[static_cast<size_t>(b)].size(); ++n) {
      loc_audio[static_cast<size_t>(b)].push_back(g.row_of(sel_a, static_cast<int64_t>(n)));
      loc_visual[static_cast<size_t>(b)].push_back(
          g.mul_rowvec(raw_v_b, g.row_of(sel_v, static_cast<int64_t>(n))));
    }
  }

  out.loss_loc = obj::localization_node(g, loc_audio, loc_visual, tau);
  out.loss_group = g.mean_all(g.stack_scalars(group_terms));
  out.loss_total = g.add(out.loss_loc, out.loss_group);
  return out;
}

}  // namespace model

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

enum class SelectionMode { kGroundTruth, kPredicted };

template <typename T>
struct SampleInference {
  std::vector<int> categories;                  // selected category per source slot
  std::vector<Tensor<double>> feature_maps;     // per slot, grid_h x grid_w
  std::vector<Tensor<double>> audio_embeddings; // per slot, [D]
  std::vector<Tensor<double>> visual_embeddings;
  Tensor<double> presence_audio;                // [C] (empty when grouping off)
  Tensor<double> presence_visual;
  int grid_h = 0, grid_w = 0;
};

// Forward pass for one sample; maps are class-aware when grouping is on and
// the shared global map otherwise.
template <typename T>
SampleInference<T> infer_sample(const AvgnModel<T>& m, const SceneSample& sample,
                                SelectionMode selection, const StftParams& stft = {}) {
  const ModelConfig& cfg = m.cfg;
  require(static_cast<int>(sample.label.size()) == cfg.categories,
          "infer: label length != configured categories");

  ad::Graph<T> g;
  const model::ModelVars<T> v = model::to_graph(g, m, false);

  const LogSpectrogram spec = stft_log_spectrogram(sample.mixture, stft.window_ms, stft.hop_ms,
                                                   stft.fft_size, stft.floor_eps);
  const int audio_in = g.leaf(enc::audio_input<T>(spec), false);
  const int visual_in = g.leaf(enc::visual_input<T>(sample.image), false);
  const int audio_feat = g.gap2d(enc::conv_stack(g, v.audio_enc, audio_in));  // [1, D]
  const int visual_grid = enc::conv_stack(g, v.visual_enc, visual_in);
  const int visual_rows3 = g.chw_to_rows(visual_grid);  // [1, P, D]

  SampleInference<T> out;
  out.grid_h = static_cast<int>(g.val(visual_grid).dim(2));
  out.grid_w = static_cast<int>(g.val(visual_grid).dim(3));

  const int64_t dim = cfg.dim;
  int feats_a3 = g.reshape(audio_feat, {1, 1, dim});
  int feats_v3 = visual_rows3;
  int tok_a = v.tokens, tok_v = v.tokens;
  if (cfg.avct_on) {
    auto [fa, ta] = avct::attend_nodes(g, feats_a3, v.tokens, v.attn_audio, cfg.attn_block);
    auto [fv, tv] = avct::attend_nodes(g, visual_rows3, v.tokens, v.attn_visual, cfg.attn_block);
    feats_a3 = fa;
    feats_v3 = fv;
    tok_a = g.batch_of(ta, 0);
    tok_v = g.batch_of(tv, 0);
  }
  const int fa = g.batch_of(feats_a3, 0);       // [1, D]
  const int fv = g.batch_of(feats_v3, 0);       // [P, D]
  const int raw_v = g.batch_of(visual_rows3, 0);

  if (!cfg.avg_on) {
    // single global map shared by all sources (baseline / AVCT-only wiring)
    const Tensor<T>& a_vec = g.val(fa);
    const Tensor<T>& v_rows = g.val(fv);
    Tensor<T> ones({dim}, T(1));
    Tensor<T> a1({dim});
    for (int64_t j = 0; j < dim; ++j) a1[j] = a_vec.at(0, j);
    const Tensor<double> map =
        similarity_map(a1, v_rows, ones, out.grid_h, out.grid_w);
    const auto idx = selected_categories(sample.label);
    for (int64_t c : idx) {
      out.categories.push_back(static_cast<int>(c));
      out.feature_maps.push_back(map);
      out.audio_embeddings.push_back(a1.template cast<double>());
      Tensor<T> dummy({dim}, T(1));
      out.visual_embeddings.push_back(dummy.template cast<double>());
    }
    return out;
  }

  // grouping (inference uses noise-free assignments: argmax in hard mode)
  int assign_a, assign_v;
  if (cfg.assignment == AssignMode::kSoft) {
    assign_a = grp::assignment_node(g, fa, tok_a, v.grp_audio, AssignMode::kSoft, nullptr);
    assign_v = grp::assignment_node(g, fv, tok_v, v.grp_visual, AssignMode::kSoft, nullptr);
  } else {
    // zero noise tensor: argmax of bare logits
    const int qa = g.matmul(fa, v.grp_audio.w_q, false, true);
    const int ka = g.matmul(tok_a, v.grp_audio.w_k, false, true);
    assign_a = g.hard_softmax_st(g.matmul(qa, ka, false, true),
                                 Tensor<T>({1, cfg.categories}), T(1));
    const int qv = g.matmul(fv, v.grp_visual.w_q, false, true);
    const int kv = g.matmul(tok_v, v.grp_visual.w_k, false, true);
    assign_v = g.hard_softmax_st(g.matmul(qv, kv, false, true),
                                 Tensor<T>({g.val(fv).dim(0), cfg.categories}), T(1));
  }
  const int g_a = grp::group_node(g, fa, assign_a, tok_a, v.grp_audio);
  const int g_v = grp::group_node(g, fv, assign_v, tok_v, v.grp_visual);
  const int p_a = grp::presence_node(g, g_a, v.pres_a_w, v.pres_a_b);
  const int p_v = grp::presence_node(g, g_v, v.pres_v_w, v.pres_v_b);

  out.presence_audio = g.val(p_a).template cast<double>();
  out.presence_visual = g.val(p_v).template cast<double>();

  std::vector<int64_t> idx;
  if (selection == SelectionMode::kGroundTruth) {
    idx = selected_categories(sample.label);
  } else {
    // prediction-driven selection (extrapolation mode): mean presence >= 0.5
    for (int64_t c = 0; c < cfg.categories; ++c)
      if (0.5 * (out.presence_audio[c] + out.presence_visual[c]) >= 0.5) idx.push_back(c);
    if (idx.empty()) {
      int64_t arg = 0;
      for (int64_t c = 1; c < cfg.categories; ++c)
        if (out.presence_audio[c] + out.presence_visual[c] >
            out.presence_audio[arg] + out.presence_visual[arg])
          arg = c;
      idx.push_back(arg);
    }
  }

  const Tensor<T>& raw_visual = g.val(raw_v);
  const Tensor<T>& ga = g.val(g_a);
  const Tensor<T>& gv = g.val(g_v);
  for (int64_t c : idx) {
    Tensor<T> a_row({dim}), v_row({dim});
    for (int64_t j = 0; j < dim; ++j) {
      a_row[j] = ga.at(c, j);
      v_row[j] = gv.at(c, j);
    }
    out.categories.push_back(static_cast<int>(c));
    out.feature_maps.push_back(similarity_map(a_row, raw_visual, v_row, out.grid_h, out.grid_w));
    out.audio_embeddings.push_back(a_row.template cast<double>());
    out.visual_embeddings.push_back(v_row.template cast<double>());
  }
  return out;
}

}  // namespace avgn

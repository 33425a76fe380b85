#pragma once

#include <utility>
#include <vector>

#include "avgn/graph.hpp"
#include "avgn/random.hpp"
#include "avgn/tensor.hpp"

// Audio-visual class tokens and the self-attention aggregation that aligns
// raw features with the token bank. The attention operator itself has no
// learned projections: row j of X attends with softmax(x_j X^T / sqrt(D)) X.
// A "full" block wraps that operator with a residual and a position-wise
// two-layer feed-forward (hidden 2D); "plain" stacks the bare operator.

namespace avgn {

enum class AttnBlock { kFullBlock, kAttentionOnly };

template <typename T>
struct ClassTokens {
  Tensor<T> tokens;  // [C, D]

  static ClassTokens init(int categories, int dim, Rng& rng, double scale = 0.02) {
    ClassTokens t;
    t.tokens = Tensor<T>({categories, dim});
    for (int64_t i = 0; i < t.tokens.numel(); ++i)
      t.tokens[i] = static_cast<T>(rng.gaussian(0.0, scale));
    return t;
  }
};

template <typename T>
struct ClassifierWeights {
  Tensor<T> w;  // [out, in]
  Tensor<T> b;  // [out]

  static ClassifierWeights init(int out, int in, Rng& rng) {
    ClassifierWeights c;
    c.w = Tensor<T>({out, in});
    const double std = std::sqrt(2.0 / (in + out));
    for (int64_t i = 0; i < c.w.numel(); ++i) c.w[i] = static_cast<T>(rng.gaussian(0.0, std));
    c.b = Tensor<T>({out});
    return c;
  }
};

template <typename T>
struct AttentionWeights {
  struct Layer {
    Tensor<T> w1, b1;  // [2D, D], [2D]
    Tensor<T> w2, b2;  // [D, 2D], [D]
  };
  std::vector<Layer> layers;

  static AttentionWeights init(int dim, int depth, Rng& rng) {
    AttentionWeights a;
    for (int l = 0; l < depth; ++l) {
      Layer layer;
      layer.w1 = Tensor<T>({2 * dim, dim});
      layer.w2 = Tensor<T>({dim, 2 * dim});
      const double s1 = std::sqrt(2.0 / dim), s2 = std::sqrt(2.0 / (2.0 * dim));
      for (int64_t i = 0; i < layer.w1.numel(); ++i)
        layer.w1[i] = static_cast<T>(rng.gaussian(0.0, s1));
      for (int64_t i = 0; i < layer.w2.numel(); ++i)
        layer.w2[i] = static_cast<T>(rng.gaussian(0.0, s2));
      layer.b1 = Tensor<T>({2 * dim});
      layer.b2 = Tensor<T>({dim});
      a.layers.push_back(std::move(layer));
    }
    return a;
  }
};

template <typename T>
struct AttendedFeatures {
  Tensor<T> features;  // [M', D]
  Tensor<T> tokens;    // [C, D]
};

// Row i of probabilities is e_i = softmax(FC(c_i)); target for row i is
// one-hot(i).
template <typename T>
struct TokenClassOutput {
  Tensor<T> probabilities;  // [C, C]
};

namespace avct {

template <typename T>
struct AttnVars {
  struct Layer {
    int w1, b1, w2, b2;
  };
  std::vector<Layer> layers;
};

template <typename T>
AttnVars<T> to_graph(ad::Graph<T>& g, const AttentionWeights<T>& a, bool needs_grad) {
  AttnVars<T> v;
  for (const auto& l : a.layers)
    v.layers.push_back({g.leaf(l.w1, needs_grad), g.leaf(l.b1, needs_grad),
                        g.leaf(l.w2, needs_grad), g.leaf(l.b2, needs_grad)});
  return v;
}

// one Eq. 4/5 application on [B,M,D]
template <typename T>
int self_attention(ad::Graph<T>& g, int x) {
  const int64_t dim = g.val(x).dim(2);
  const int logits = g.scale(g.bmm(x, x, false, true), T(1.0 / std::sqrt(static_cast<double>(dim))));
  return g.bmm(g.softmax_last(logits), x);
}

// feats [B,M',D] + shared tokens [C,D] -> (features [B,M',D], tokens [B,C,D])
template <typename T>
std::pair<int, int> attend_nodes(ad::Graph<T>& g, int feats, int tokens,
                                 const AttnVars<T>& vars, AttnBlock mode) {
  const int64_t nb = g.val(feats).dim(0);
  const int64_t m = g.val(feats).dim(1);
  const int64_t c = g.val(tokens).dim(0);
  const int64_t d = g.val(feats).dim(2);
  require(g.val(tokens).dim(1) == d, "attend: token dimension mismatch");

  int x = g.append_rows_shared(feats, tokens);  // [B, M+C, D]
  for (const auto& layer : vars.layers) {
    const int att = self_attention(g, x);
    if (mode == AttnBlock::kAttentionOnly) {
      x = att;
      continue;
    }
    const int res = g.add(x, att);
    const int flat = g.reshape(res, {nb * (m + c), d});
    const int ffn = g.linear(g.relu(g.linear(flat, layer.w1, layer.b1)), layer.w2, layer.b2);
    x = g.add(res, g.reshape(ffn, {nb, m + c, d}));
  }
  return {g.slice_rows3(x, 0, m), g.slice_rows3(x, m, m + c)};
}

// token probabilities [C,C] from raw tokens
template <typename T>
int token_probs_node(ad::Graph<T>& g, int tokens, int head_w, int head_b) {
  return g.softmax_last(g.linear(tokens, head_w, head_b));
}

template <typename T>
int token_ce_node(ad::Graph<T>& g, int probs, T log_floor = T(1e-12)) {
  return g.ce_identity_rows(probs, log_floor);
}

}  // namespace avct

// Spec-surface wrappers ------------------------------------------------------

template <typename T>
AttendedFeatures<T> attend(const Tensor<T>& features, const ClassTokens<T>& tokens, int depth,
                           const AttentionWeights<T>& weights,
                           AttnBlock mode = AttnBlock::kFullBlock) {
  require(depth >= 1, "attend: depth must be >= 1");
  require(features.rank() == 2 && features.dim(1) == tokens.tokens.dim(1),
          "attend: feature/token dimension mismatch");
  require(static_cast<int>(weights.layers.size()) >= depth, "attend: not enough layers");
  ad::Graph<T> g;
  Tensor<T> f3({1, features.dim(0), features.dim(1)});
  f3.data = features.data;
  const int feats = g.leaf(f3, false);
  const int toks = g.leaf(tokens.tokens, false);
  avct::AttnVars<T> vars = avct::to_graph(g, weights, false);
  vars.layers.resize(static_cast<size_t>(depth));
  const auto [of, ot] = avct::attend_nodes(g, feats, toks, vars, mode);
  AttendedFeatures<T> out;
  out.features = Tensor<T>({features.dim(0), features.dim(1)});
  out.features.data = g.val(of).data;
  out.tokens = Tensor<T>({tokens.tokens.dim(0), tokens.tokens.dim(1)});
  out.tokens.data = g.val(ot).data;
  return out;
}

template <typename T>
TokenClassOutput<T> token_class_logits(const ClassTokens<T>& tokens,
                                       const ClassifierWeights<T>& head) {
  require(head.w.dim(1) == tokens.tokens.dim(1), "token_class_logits: head maps D -> C");
  ad::Graph<T> g;
  const int probs = avct::token_probs_node(g, g.leaf(tokens.tokens, false),
                                           g.leaf(head.w, false), g.leaf(head.b, false));
  TokenClassOutput<T> out;
  out.probabilities = g.val(probs);
  return out;
}

template <typename T>
T token_ce_loss(const TokenClassOutput<T>& out) {
  ad::Graph<T> g;
  return g.val(avct::token_ce_node(g, g.leaf(out.probabilities, false)))[0];
}

}  // namespace avgn

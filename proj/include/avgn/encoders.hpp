#pragma once

#include <vector>

#include "avgn/graph.hpp"
#include "avgn/image.hpp"
#include "avgn/random.hpp"
#include "avgn/signal.hpp"
#include "avgn/tensor.hpp"

// Two-stream desk-scale encoders: a stride-2 stem plus four stride-2 conv
// blocks (total downsampling 32 per axis). The audio branch global-average
// pools to one D-vector; the visual branch keeps the spatial grid.

namespace avgn {

template <typename T>
struct ConvLayer {
  Tensor<T> w;  // [Cout, Cin, 3, 3]
  Tensor<T> b;  // [Cout]
};

template <typename T>
struct EncoderWeights {
  std::vector<ConvLayer<T>> layers;
  int in_channels = 0;
  int dim = 0;

  static std::vector<int> widths(int dim) {
    return {std::max(4, dim / 16), std::max(4, dim / 8), std::max(8, dim / 4),
            std::max(8, dim / 2), dim};
  }

  static EncoderWeights init(int in_channels, int dim, Rng& rng) {
    EncoderWeights e;
    e.in_channels = in_channels;
    e.dim = dim;
    int cin = in_channels;
    for (int cout : widths(dim)) {
      ConvLayer<T> l;
      l.w = Tensor<T>({cout, cin, 3, 3});
      const double std = std::sqrt(2.0 / (9.0 * cin));  // He init
      for (int64_t i = 0; i < l.w.numel(); ++i) l.w[i] = static_cast<T>(rng.gaussian(0.0, std));
      l.b = Tensor<T>({cout});
      e.layers.push_back(std::move(l));
      cin = cout;
    }
    return e;
  }
};

template <typename T>
struct AudioFeature {
  Tensor<T> vector;  // [1, D]
};

template <typename T>
struct VisualFeatureMap {
  Tensor<T> features;  // [P, D], p = row*grid_w + col
  int grid_h = 0;
  int grid_w = 0;
};

// fixed input normalization constants
inline constexpr double kSpectrogramShift = 8.0;
inline constexpr double kSpectrogramScale = 4.0;
inline constexpr double kImageShift = 0.5;

namespace enc {

template <typename T>
struct EncoderVars {
  std::vector<std::pair<int, int>> layers;  // (w, b) leaf ids
};

template <typename T>
EncoderVars<T> to_graph(ad::Graph<T>& g, const EncoderWeights<T>& e, bool needs_grad) {
  EncoderVars<T> v;
  for (const ConvLayer<T>& l : e.layers)
    v.layers.push_back({g.leaf(l.w, needs_grad), g.leaf(l.b, needs_grad)});
  return v;
}

// x [B,Cin,H,W] -> [B,D,ceil(H/32),ceil(W/32)]
template <typename T>
int conv_stack(ad::Graph<T>& g, const EncoderVars<T>& v, int x) {
  int h = x;
  for (const auto& [w, b] : v.layers) h = g.relu(g.conv2d(h, w, b, 2, 1));
  return h;
}

// spectrogram [F,Tt] -> normalized [1,1,F,Tt] tensor
template <typename T>
Tensor<T> audio_input(const LogSpectrogram& spec) {
  Tensor<T> x({1, 1, spec.values.dim(0), spec.values.dim(1)});
  for (int64_t i = 0; i < x.numel(); ++i)
    x[i] = static_cast<T>((spec.values[i] + kSpectrogramShift) / kSpectrogramScale);
  return x;
}

// image (HWC, [0,1]) -> normalized [1,3,H,W] tensor
template <typename T>
Tensor<T> visual_input(const Image& img) {
  Tensor<T> x({1, img.channels, img.height, img.width});
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int xx = 0; xx < img.width; ++xx)
        x.at(0, c, y, xx) = static_cast<T>(img.at(y, xx, c) - kImageShift);
  return x;
}

}  // namespace enc

template <typename T>
AudioFeature<T> encode_audio(const LogSpectrogram& spec, const EncoderWeights<T>& weights) {
  require(spec.values.all_finite(), "encode_audio: non-finite spectrogram");
  require(weights.in_channels == 1, "encode_audio: weights expect 1 input channel");
  ad::Graph<T> g;
  const int x = g.leaf(enc::audio_input<T>(spec), false);
  const auto vars = enc::to_graph(g, weights, false);
  const int pooled = g.gap2d(enc::conv_stack(g, vars, x));  // [1, D]
  AudioFeature<T> out;
  out.vector = g.val(pooled);
  return out;
}

template <typename T>
VisualFeatureMap<T> encode_visual(const Image& img, const EncoderWeights<T>& weights) {
  require(img.height == 224 && img.width > 0 && img.width % 224 == 0,
          "encode_visual: image must be 224 x (k*224)");
  require(img.channels == weights.in_channels, "encode_visual: channel mismatch");
  ad::Graph<T> g;
  const int x = g.leaf(enc::visual_input<T>(img), false);
  const auto vars = enc::to_graph(g, weights, false);
  const int grid = enc::conv_stack(g, vars, x);  // [1, D, h, w]
  const int rows = g.chw_to_rows(grid);          // [1, P, D]
  VisualFeatureMap<T> out;
  out.grid_h = static_cast<int>(g.val(grid).dim(2));
  out.grid_w = static_cast<int>(g.val(grid).dim(3));
  Tensor<T> feats({g.val(rows).dim(1), g.val(rows).dim(2)});
  std::copy(g.val(rows).data.begin(), g.val(rows).data.end(), feats.data.begin());
  out.features = std::move(feats);
  return out;
}

}  // namespace avgn

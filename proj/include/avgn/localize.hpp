#pragma once

#include <algorithm>
#include <cmath>

#include "avgn/common.hpp"
#include "avgn/tensor.hpp"

// Inference-time localization maps: cosine between the class-aware audio
// embedding and the masked spatial features, then corner-aligned bilinear
// upsampling to image resolution.

namespace avgn {

struct LocalizationMap {
  Tensor<double> feature_map;  // [h, w], cosine values in [-1, 1]
  Tensor<double> image_map;    // [H, W]
  int source_category = -1;
};

// map[p] = cosine(g_audio, raw_visual_p (*) g_visual), reshaped row-major
template <typename T>
Tensor<double> similarity_map(const Tensor<T>& g_audio, const Tensor<T>& raw_visual,
                              const Tensor<T>& g_visual, int grid_h, int grid_w) {
  require(raw_visual.rank() == 2 && raw_visual.dim(0) == static_cast<int64_t>(grid_h) * grid_w,
          "similarity_map: P != h*w");
  const int64_t d = raw_visual.dim(1);
  require(g_audio.numel() == d && g_visual.numel() == d, "similarity_map: dimension mismatch");
  const double eps = 1e-12;

  double na = 0.0;
  for (int64_t j = 0; j < d; ++j) na += static_cast<double>(g_audio[j]) * g_audio[j];
  na = std::max(std::sqrt(na), eps);

  Tensor<double> map({grid_h, grid_w});
  for (int64_t p = 0; p < raw_visual.dim(0); ++p) {
    double dot = 0.0, nv = 0.0;
    for (int64_t j = 0; j < d; ++j) {
      const double m = static_cast<double>(raw_visual.at(p, j)) * g_visual[j];
      dot += m * static_cast<double>(g_audio[j]);
      nv += m * m;
    }
    nv = std::max(std::sqrt(nv), eps);
    map[p] = dot / (na * nv);
  }
  return map;
}

// Corner-aligned bilinear interpolation; exact at the four corners and never
// outside the input min/max.
inline Tensor<double> upsample_bilinear(const Tensor<double>& map, int target_h, int target_w) {
  require(map.rank() == 2 && map.dim(0) >= 1 && map.dim(1) >= 1, "upsample: empty map");
  require(target_h >= 1 && target_w >= 1, "upsample: empty target");
  const int64_t h = map.dim(0), w = map.dim(1);
  Tensor<double> out({target_h, target_w});
  for (int64_t i = 0; i < target_h; ++i) {
    const double r = (h == 1 || target_h == 1)
                         ? 0.0
                         : static_cast<double>(i) * static_cast<double>(h - 1) / (target_h - 1);
    const int64_t r0 = std::min<int64_t>(static_cast<int64_t>(r), h - 1);
    const int64_t r1 = std::min<int64_t>(r0 + 1, h - 1);
    const double fr = r - static_cast<double>(r0);
    for (int64_t j = 0; j < target_w; ++j) {
      const double c = (w == 1 || target_w == 1)
                           ? 0.0
                           : static_cast<double>(j) * static_cast<double>(w - 1) / (target_w - 1);
      const int64_t c0 = std::min<int64_t>(static_cast<int64_t>(c), w - 1);
      const int64_t c1 = std::min<int64_t>(c0 + 1, w - 1);
      const double fc = c - static_cast<double>(c0);
      out.at(i, j) = (1.0 - fr) * ((1.0 - fc) * map.at(r0, c0) + fc * map.at(r0, c1)) +
                     fr * ((1.0 - fc) * map.at(r1, c0) + fc * map.at(r1, c1));
    }
  }
  return out;
}

}  // namespace avgn

#pragma once

#include <vector>

#include "avgn/common.hpp"

namespace avgn {

// HWC row-major image, values in [0,1].
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> pix;

  Image() = default;
  Image(int h, int w, int c, double fill = 0.0)
      : height(h), width(w), channels(c),
        pix(static_cast<size_t>(h) * static_cast<size_t>(w) * static_cast<size_t>(c), fill) {}

  double& at(int y, int x, int c) {
    return pix[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  double at(int y, int x, int c) const {
    return pix[(static_cast<size_t>(y) * width + x) * channels + c];
  }
};

// Side-by-side concatenation along the horizontal axis: left half is a,
// right half is b. Heights and channel counts must match.
inline Image concat_frames(const Image& a, const Image& b) {
  require(a.height == b.height, "concat_frames: height mismatch");
  require(a.channels == b.channels, "concat_frames: channel mismatch");
  require(a.height > 0 && a.width > 0 && b.width > 0, "concat_frames: empty image");
  Image out(a.height, a.width + b.width, a.channels);
  for (int y = 0; y < a.height; ++y) {
    for (int x = 0; x < a.width; ++x)
      for (int c = 0; c < a.channels; ++c) out.at(y, x, c) = a.at(y, x, c);
    for (int x = 0; x < b.width; ++x)
      for (int c = 0; c < a.channels; ++c) out.at(y, a.width + x, c) = b.at(y, x, c);
  }
  return out;
}

}  // namespace avgn

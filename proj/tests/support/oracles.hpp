#pragma once

#include <complex>
#include <vector>

#include "avgn/tensor.hpp"

// Brute-force reference implementations kept independent of the library code
// they check.

namespace avgn::test {

// DFT of one Hann-tapered frame sampled at `fft_size` bins; the frame may be
// longer than fft_size (spectral sampling of the full window).
inline std::vector<double> dft_magnitudes(const std::vector<double>& frame, int fft_size) {
  const int bins = fft_size / 2 + 1;
  const size_t w = frame.size();
  std::vector<double> mags(static_cast<size_t>(bins));
  for (int k = 0; k < bins; ++k) {
    std::complex<double> acc(0.0, 0.0);
    for (size_t n = 0; n < w; ++n) {
      const double taper =
          w > 1 ? 0.5 - 0.5 * std::cos(2.0 * M_PI * static_cast<double>(n) /
                                       static_cast<double>(w - 1))
                : 1.0;
      const double ang = -2.0 * M_PI * k * static_cast<double>(n) / fft_size;
      acc += taper * frame[n] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    mags[static_cast<size_t>(k)] = std::abs(acc);
  }
  return mags;
}

// AP oracle: for each positive pixel, precision is computed by counting, over
// the whole map, how many pixels rank at or above it (value desc, row-major
// tie-break) and how many of those are positive.
inline double ap_by_counting(const Tensor<double>& map, const Tensor<uint8_t>& mask) {
  const int64_t n = map.numel();
  double ap = 0.0;
  int64_t positives = 0;
  for (int64_t i = 0; i < n; ++i) {
    if (mask[i] == 0) continue;
    ++positives;
    int64_t at_or_above = 0, pos_at_or_above = 0;
    for (int64_t j = 0; j < n; ++j) {
      const bool ranks_above = map[j] > map[i] || (map[j] == map[i] && j <= i);
      if (ranks_above) {
        ++at_or_above;
        pos_at_or_above += mask[j] != 0;
      }
    }
    ap += static_cast<double>(pos_at_or_above) / static_cast<double>(at_or_above);
  }
  return ap / static_cast<double>(positives);
}

// IoU by direct set counting
inline double iou_by_counting(const Tensor<uint8_t>& a, const Tensor<uint8_t>& b) {
  int64_t inter = 0, uni = 0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    inter += (a[i] != 0) && (b[i] != 0);
    uni += (a[i] != 0) || (b[i] != 0);
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// recursive permutation enumeration (independent of std::next_permutation)
inline void permutations_rec(std::vector<size_t>& cur, std::vector<bool>& used, size_t n,
                             std::vector<std::vector<size_t>>& out) {
  if (cur.size() == n) {
    out.push_back(cur);
    return;
  }
  for (size_t i = 0; i < n; ++i) {
    if (used[i]) continue;
    used[i] = true;
    cur.push_back(i);
    permutations_rec(cur, used, n, out);
    cur.pop_back();
    used[i] = false;
  }
}

inline std::vector<std::vector<size_t>> all_permutations(size_t n) {
  std::vector<std::vector<size_t>> out;
  std::vector<size_t> cur;
  std::vector<bool> used(n, false);
  permutations_rec(cur, used, n, out);
  return out;
}

}  // namespace avgn::test

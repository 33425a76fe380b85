#pragma once

#include <cmath>
#include <complex>
#include <vector>

#include "avgn/common.hpp"
#include "avgn/fft.hpp"
#include "avgn/tensor.hpp"

namespace avgn {

struct Waveform {
  std::vector<double> samples;
  int sample_rate = 22050;

  double duration() const {
    return static_cast<double>(samples.size()) / static_cast<double>(sample_rate);
  }
  bool all_finite() const {
    for (double s : samples)
      if (!std::isfinite(s)) return false;
    return true;
  }
};

// F x T log-magnitude STFT with the geometry it was computed under.
struct LogSpectrogram {
  Tensor<double> values;  // [F, T]
  int freq_bins = 0;
  int frames = 0;
  double window_ms = 0.0;
  double hop_ms = 0.0;
};

inline int64_t ms_to_samples(double ms, int sample_rate) {
  return static_cast<int64_t>(std::llround(ms * 1e-3 * static_cast<double>(sample_rate)));
}

// Hann-windowed STFT, log magnitude, floored at floor_eps.
//
// Each frame covers `window` samples taken every `hop` samples with no edge
// padding, so T = floor((len - window)/hop) + 1. The spectrum is the DFT of
// the Hann-tapered frame sampled at fft_size points: the frame is folded
// modulo fft_size before the transform, which equals zero-padding when
// window <= fft_size and exact spectral sampling (time aliasing) when
// window > fft_size. The Hann taper keeps a tone's main lobe wider than one
// bin spacing, so spectral lines cannot fall between sample points. Only the
// nonnegative half [0, fft_size/2] is kept, F = fft_size/2 + 1.
inline LogSpectrogram stft_log_spectrogram(const Waveform& wave, double window_ms,
                                           double hop_ms, int fft_size, double floor_eps) {
  require(wave.all_finite(), "stft: waveform has non-finite samples");
  require(fft_size > 0 && (fft_size & (fft_size - 1)) == 0, "stft: fft_size must be a power of two");
  require(floor_eps > 0.0, "stft: floor_eps must be positive");
  require(window_ms > 0.0 && hop_ms > 0.0, "stft: window and hop must be positive");

  const int64_t len = static_cast<int64_t>(wave.samples.size());
  const int64_t window = ms_to_samples(window_ms, wave.sample_rate);
  const int64_t hop = ms_to_samples(hop_ms, wave.sample_rate);
  require(window >= 1 && hop >= 1, "stft: window/hop shorter than one sample");
  require(len >= window, "stft: waveform shorter than one window");

  const int64_t frames = (len - window) / hop + 1;
  const int freq_bins = fft_size / 2 + 1;

  LogSpectrogram out;
  out.values = Tensor<double>({freq_bins, frames});
  out.freq_bins = freq_bins;
  out.frames = static_cast<int>(frames);
  out.window_ms = window_ms;
  out.hop_ms = hop_ms;

  std::vector<double> taper(static_cast<size_t>(window), 1.0);
  if (window > 1)
    for (int64_t n = 0; n < window; ++n)
      taper[static_cast<size_t>(n)] =
          0.5 - 0.5 * std::cos(2.0 * M_PI * static_cast<double>(n) / static_cast<double>(window - 1));

  std::vector<std::complex<double>> buf(static_cast<size_t>(fft_size));
  for (int64_t t = 0; t < frames; ++t) {
    std::fill(buf.begin(), buf.end(), std::complex<double>(0.0, 0.0));
    const int64_t start = t * hop;
    for (int64_t n = 0; n < window; ++n)
      buf[static_cast<size_t>(n % fft_size)] +=
          taper[static_cast<size_t>(n)] * wave.samples[static_cast<size_t>(start + n)];
    fft_inplace(buf);
    for (int f = 0; f < freq_bins; ++f)
      out.values.at(f, t) = std::log(std::max(std::abs(buf[static_cast<size_t>(f)]), floor_eps));
  }
  return out;
}

// Sample-wise sum. No clipping or renormalization.
inline Waveform mix_waveforms(const std::vector<Waveform>& waves) {
  require(!waves.empty(), "mix: empty waveform list");
  const size_t len = waves[0].samples.size();
  const int rate = waves[0].sample_rate;
  for (const Waveform& w : waves) {
    require(w.samples.size() == len, "mix: length mismatch");
    require(w.sample_rate == rate, "mix: sample-rate mismatch");
  }
  Waveform out;
  out.sample_rate = rate;
  out.samples.assign(len, 0.0);
  for (const Waveform& w : waves)
    for (size_t i = 0; i < len; ++i) out.samples[i] += w.samples[i];
  return out;
}

// Pure tone; phase in radians.
inline Waveform sine_wave(double freq_hz, double amplitude, double phase, double seconds,
                          int sample_rate = 22050) {
  Waveform w;
  w.sample_rate = sample_rate;
  const int64_t n = static_cast<int64_t>(std::llround(seconds * sample_rate));
  w.samples.resize(static_cast<size_t>(n));
  const double step = 2.0 * M_PI * freq_hz / static_cast<double>(sample_rate);
  for (int64_t i = 0; i < n; ++i)
    w.samples[static_cast<size_t>(i)] = amplitude * std::sin(phase + step * static_cast<double>(i));
  return w;
}

}  // namespace avgn

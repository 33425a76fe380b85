#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "avgn/common.hpp"
#include "avgn/signal.hpp"

// 16-bit PCM mono WAV.

namespace avgn::wav {

namespace detail {
inline void put_u32(std::vector<uint8_t>& v, uint32_t x) {
  for (int i = 0; i < 4; ++i) v.push_back(static_cast<uint8_t>(x >> (8 * i)));
}
inline void put_u16(std::vector<uint8_t>& v, uint16_t x) {
  v.push_back(static_cast<uint8_t>(x));
  v.push_back(static_cast<uint8_t>(x >> 8));
}
inline uint32_t get_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}
inline uint16_t get_u16(const uint8_t* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}
}  // namespace detail

inline void write(const std::string& path, const Waveform& w) {
  const uint32_t n = static_cast<uint32_t>(w.samples.size());
  const uint32_t data_bytes = n * 2;
  std::vector<uint8_t> out;
  out.reserve(44 + data_bytes);
  const char* riff = "RIFF";
  out.insert(out.end(), riff, riff + 4);
  detail::put_u32(out, 36 + data_bytes);
  const char* wavefmt = "WAVEfmt ";
  out.insert(out.end(), wavefmt, wavefmt + 8);
  detail::put_u32(out, 16);
  detail::put_u16(out, 1);  // PCM
  detail::put_u16(out, 1);  // mono
  detail::put_u32(out, static_cast<uint32_t>(w.sample_rate));
  detail::put_u32(out, static_cast<uint32_t>(w.sample_rate) * 2);
  detail::put_u16(out, 2);
  detail::put_u16(out, 16);
  const char* data = "data";
  out.insert(out.end(), data, data + 4);
  detail::put_u32(out, data_bytes);
  for (double s : w.samples) {
    double c = s < -1.0 ? -1.0 : (s > 1.0 ? 1.0 : s);
    const int16_t q = static_cast<int16_t>(std::lround(c * 32767.0));
    detail::put_u16(out, static_cast<uint16_t>(q));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("wav: cannot open for write: " + path);
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
}

inline Waveform read(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw parse_error("wav: cannot open: " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw parse_error("wav: bad header: " + path);

  Waveform w;
  size_t pos = 12;
  bool have_fmt = false;
  while (pos + 8 <= bytes.size()) {
    const uint32_t len = detail::get_u32(&bytes[pos + 4]);
    if (std::memcmp(&bytes[pos], "fmt ", 4) == 0) {
      if (len < 16 || pos + 8 + len > bytes.size()) throw parse_error("wav: bad fmt chunk");
      if (detail::get_u16(&bytes[pos + 8]) != 1 || detail::get_u16(&bytes[pos + 10]) != 1 ||
          detail::get_u16(&bytes[pos + 22]) != 16)
        throw parse_error("wav: only 16-bit PCM mono supported");
      w.sample_rate = static_cast<int>(detail::get_u32(&bytes[pos + 12]));
      have_fmt = true;
    } else if (std::memcmp(&bytes[pos], "data", 4) == 0) {
      if (!have_fmt) throw parse_error("wav: data before fmt");
      if (pos + 8 + len > bytes.size()) throw parse_error("wav: truncated data chunk");
      const size_t n = len / 2;
      w.samples.resize(n);
      for (size_t i = 0; i < n; ++i) {
        const int16_t q =
            static_cast<int16_t>(detail::get_u16(&bytes[pos + 8 + 2 * i]));
        w.samples[i] = static_cast<double>(q) / 32767.0;
      }
      return w;
    }
    pos += 8 + len + (len & 1);
  }
  throw parse_error("wav: missing data chunk: " + path);
}

}  // namespace avgn::wav

#pragma once

#include <zlib.h>

#include <cmath>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "avgn/common.hpp"
#include "avgn/image.hpp"

// Minimal PNG support: 8-bit RGB, no interlace. The writer emits filter-0
// scanlines; the reader handles filters 0-4 so foreign 8-bit RGB files load
// too.

namespace avgn::png {

namespace detail {

inline void put_u32(std::vector<uint8_t>& v, uint32_t x) {
  v.push_back(static_cast<uint8_t>(x >> 24));
  v.push_back(static_cast<uint8_t>(x >> 16));
  v.push_back(static_cast<uint8_t>(x >> 8));
  v.push_back(static_cast<uint8_t>(x));
}

inline uint32_t get_u32(const uint8_t* p) {
  return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
         (static_cast<uint32_t>(p[2]) << 8) | static_cast<uint32_t>(p[3]);
}

inline void write_chunk(std::vector<uint8_t>& out, const char type[4],
                        const std::vector<uint8_t>& payload) {
  put_u32(out, static_cast<uint32_t>(payload.size()));
  std::vector<uint8_t> body(type, type + 4);
  body.insert(body.end(), payload.begin(), payload.end());
  out.insert(out.end(), body.begin(), body.end());
  const uint32_t crc = static_cast<uint32_t>(
      crc32(0L, body.data(), static_cast<uInt>(body.size())));
  put_u32(out, crc);
}

inline uint8_t paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return static_cast<uint8_t>(a);
  if (pb <= pc) return static_cast<uint8_t>(b);
  return static_cast<uint8_t>(c);
}

}  // namespace detail

// quantize [0,1] -> 8-bit
inline uint8_t to_byte(double v) {
  if (v <= 0.0) return 0;
  if (v >= 1.0) return 255;
  return static_cast<uint8_t>(std::lround(v * 255.0));
}

inline void write_rgb8(const std::string& path, const std::vector<uint8_t>& rgb, int width,
                       int height) {
  require(width > 0 && height > 0, "png: empty image");
  require(rgb.size() == static_cast<size_t>(width) * height * 3, "png: buffer size mismatch");

  std::vector<uint8_t> raw;
  raw.reserve(static_cast<size_t>(height) * (1 + static_cast<size_t>(width) * 3));
  for (int y = 0; y < height; ++y) {
    raw.push_back(0);  // filter type 0
    const uint8_t* row = rgb.data() + static_cast<size_t>(y) * width * 3;
    raw.insert(raw.end(), row, row + static_cast<size_t>(width) * 3);
  }

  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<uint8_t> comp(bound);
  if (compress2(comp.data(), &bound, raw.data(), static_cast<uLong>(raw.size()),
                Z_DEFAULT_COMPRESSION) != Z_OK)
    throw std::runtime_error("png: deflate failed");
  comp.resize(bound);

  std::vector<uint8_t> out = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  std::vector<uint8_t> ihdr;
  detail::put_u32(ihdr, static_cast<uint32_t>(width));
  detail::put_u32(ihdr, static_cast<uint32_t>(height));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(2);  // color type RGB
  ihdr.push_back(0);  // compression
  ihdr.push_back(0);  // filter
  ihdr.push_back(0);  // no interlace
  detail::write_chunk(out, "IHDR", ihdr);
  detail::write_chunk(out, "IDAT", comp);
  detail::write_chunk(out, "IEND", {});

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("png: cannot open for write: " + path);
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
}

inline void write_image(const std::string& path, const Image& img) {
  require(img.channels == 3, "png: expected 3-channel image");
  std::vector<uint8_t> rgb(static_cast<size_t>(img.width) * img.height * 3);
  size_t k = 0;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) rgb[k++] = to_byte(img.at(y, x, c));
  write_rgb8(path, rgb, img.width, img.height);
}

inline std::vector<uint8_t> read_rgb8(const std::string& path, int& width, int& height) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw parse_error("png: cannot open: " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  static const uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  if (bytes.size() < 8 || std::memcmp(bytes.data(), sig, 8) != 0)
    throw parse_error("png: bad signature: " + path);

  size_t pos = 8;
  width = height = 0;
  int bit_depth = 0, color_type = 0;
  std::vector<uint8_t> idat;
  while (pos + 8 <= bytes.size()) {
    const uint32_t len = detail::get_u32(&bytes[pos]);
    if (pos + 12 + len > bytes.size()) throw parse_error("png: truncated chunk");
    const char* type = reinterpret_cast<const char*>(&bytes[pos + 4]);
    const uint8_t* payload = &bytes[pos + 8];
    if (std::memcmp(type, "IHDR", 4) == 0) {
      width = static_cast<int>(detail::get_u32(payload));
      height = static_cast<int>(detail::get_u32(payload + 4));
      bit_depth = payload[8];
      color_type = payload[9];
      if (payload[12] != 0) throw parse_error("png: interlaced images unsupported");
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), payload, payload + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      break;
    }
    pos += 12 + len;
  }
  if (width <= 0 || height <= 0) throw parse_error("png: missing IHDR");
  if (bit_depth != 8 || color_type != 2)
    throw parse_error("png: only 8-bit RGB supported");

  const size_t stride = static_cast<size_t>(width) * 3;
  std::vector<uint8_t> raw(static_cast<size_t>(height) * (stride + 1));
  uLongf raw_len = static_cast<uLongf>(raw.size());
  if (uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
      raw_len != raw.size())
    throw parse_error("png: inflate failed");

  std::vector<uint8_t> rgb(static_cast<size_t>(height) * stride);
  for (int y = 0; y < height; ++y) {
    const uint8_t filter = raw[static_cast<size_t>(y) * (stride + 1)];
    const uint8_t* src = &raw[static_cast<size_t>(y) * (stride + 1) + 1];
    uint8_t* dst = &rgb[static_cast<size_t>(y) * stride];
    const uint8_t* up = y > 0 ? &rgb[static_cast<size_t>(y - 1) * stride] : nullptr;
    for (size_t x = 0; x < stride; ++x) {
      const int a = x >= 3 ? dst[x - 3] : 0;
      const int b = up ? up[x] : 0;
      const int c = (up && x >= 3) ? up[x - 3] : 0;
      int v = src[x];
      switch (filter) {
        case 0: break;
        case 1: v += a; break;
        case 2: v += b; break;
        case 3: v += (a + b) / 2; break;
        case 4: v += detail::paeth(a, b, c); break;
        default: throw parse_error("png: unknown filter type");
      }
      dst[x] = static_cast<uint8_t>(v & 0xff);
    }
  }
  return rgb;
}

inline Image read_image(const std::string& path) {
  int w = 0, h = 0;
  const std::vector<uint8_t> rgb = read_rgb8(path, w, h);
  Image img(h, w, 3);
  size_t k = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = static_cast<double>(rgb[k++]) / 255.0;
  return img;
}

}  // namespace avgn::png

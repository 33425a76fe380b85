#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "avgn/common.hpp"
#include "avgn/image.hpp"
#include "avgn/random.hpp"
#include "avgn/signal.hpp"

namespace avgn {

enum class Sprite { kCircle = 0, kSquare, kTriangle, kPentagon };

struct CategorySpec {
  int category_id = 0;
  Sprite sprite = Sprite::kCircle;
  std::array<double, 3> color{1.0, 0.0, 0.0};
  double tone_hz = 440.0;
};

// Default table: circle/440, square/660, triangle/880, pentagon/1100 with
// distinct colors; extends past four categories by cycling sprites.
inline std::vector<CategorySpec> default_categories(int count = 4) {
  require(count >= 1, "categories: count must be >= 1");
  static const std::array<std::array<double, 3>, 8> palette = {{
      {0.90, 0.15, 0.15},  // red
      {0.15, 0.80, 0.20},  // green
      {0.20, 0.30, 0.90},  // blue
      {0.95, 0.85, 0.10},  // yellow
      {0.85, 0.20, 0.85},  // magenta
      {0.15, 0.80, 0.80},  // cyan
      {0.95, 0.55, 0.10},  // orange
      {0.55, 0.20, 0.80},  // purple
  }};
  std::vector<CategorySpec> cats(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    CategorySpec& c = cats[static_cast<size_t>(i)];
    c.category_id = i;
    c.sprite = static_cast<Sprite>(i % 4);
    c.color = palette[static_cast<size_t>(i % 8)];
    c.tone_hz = 440.0 + 220.0 * i;
  }
  return cats;
}

// Generator knobs. These are benchmark parameters, not model hyper-parameters.
struct SceneParams {
  int frame_size = 224;         // square solo frame
  double duration_s = 3.0;
  int sample_rate = 22050;
  double tone_amplitude = 0.45;
  double noise_base = 0.45;     // background gray level
  double noise_amp = 0.05;      // +- uniform noise
  double sprite_min_radius = 30.0;
  double sprite_max_radius = 46.0;
};

struct SceneSource {
  int category_id = 0;
  std::array<int, 4> box{0, 0, 0, 0};  // x0, y0, x1, y1 (half-open)
  Waveform wave;
};

struct SceneSample {
  Image image;
  std::vector<SceneSource> sources;
  Waveform mixture;
  std::vector<int> label;  // length C, 1 iff category present
  uint64_t seed = 0;
};

namespace detail {

inline bool inside_sprite(Sprite s, double px, double py, double cx, double cy, double r) {
  const double dx = px - cx, dy = py - cy;
  switch (s) {
    case Sprite::kCircle:
      return dx * dx + dy * dy <= r * r;
    case Sprite::kSquare:
      return std::abs(dx) <= r * 0.9 && std::abs(dy) <= r * 0.9;
    case Sprite::kTriangle: {
      // equilateral, apex up
      const double x0 = cx, y0 = cy - r;
      const double x1 = cx - 0.866 * r, y1 = cy + 0.5 * r;
      const double x2 = cx + 0.866 * r, y2 = cy + 0.5 * r;
      const double d0 = (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0);
      const double d1 = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1);
      const double d2 = (x0 - x2) * (py - y2) - (y0 - y2) * (px - x2);
      return (d0 >= 0 && d1 >= 0 && d2 >= 0) || (d0 <= 0 && d1 <= 0 && d2 <= 0);
    }
    case Sprite::kPentagon: {
      bool pos = false, neg = false;
      for (int k = 0; k < 5; ++k) {
        const double a0 = M_PI / 2.0 + 2.0 * M_PI * k / 5.0;
        const double a1 = M_PI / 2.0 + 2.0 * M_PI * (k + 1) / 5.0;
        const double x0 = cx + r * std::cos(a0), y0 = cy - r * std::sin(a0);
        const double x1 = cx + r * std::cos(a1), y1 = cy - r * std::sin(a1);
        const double d = (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0);
        if (d > 0) pos = true;
        if (d < 0) neg = true;
      }
      return !(pos && neg);
    }
  }
  return false;
}

// Draws one sprite on img and returns its tight pixel bounding box.
inline std::array<int, 4> draw_sprite(Image& img, const CategorySpec& cat, double cx, double cy,
                                      double r) {
  int x_min = img.width, x_max = -1, y_min = img.height, y_max = -1;
  const int lo_x = std::max(0, static_cast<int>(cx - r - 2));
  const int hi_x = std::min(img.width - 1, static_cast<int>(cx + r + 2));
  const int lo_y = std::max(0, static_cast<int>(cy - r - 2));
  const int hi_y = std::min(img.height - 1, static_cast<int>(cy + r + 2));
  for (int y = lo_y; y <= hi_y; ++y) {
    for (int x = lo_x; x <= hi_x; ++x) {
      if (!inside_sprite(cat.sprite, x + 0.5, y + 0.5, cx, cy, r)) continue;
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = cat.color[static_cast<size_t>(c)];
      x_min = std::min(x_min, x);
      x_max = std::max(x_max, x);
      y_min = std::min(y_min, y);
      y_max = std::max(y_max, y);
    }
  }
  require(x_max >= x_min && y_max >= y_min, "draw_sprite: sprite rasterized to zero area");
  return {x_min, y_min, x_max + 1, y_max + 1};
}

inline Image noise_background(int h, int w, const SceneParams& p, Rng& rng) {
  Image img(h, w, 3);
  for (double& v : img.pix) v = p.noise_base + p.noise_amp * (2.0 * rng.uniform() - 1.0);
  return img;
}

// One frame + tone for a fixed category; consumes its own RNG stream.
inline SceneSource render_source(Image& frame, const CategorySpec& cat, const SceneParams& p,
                                 uint64_t source_seed) {
  Rng rng(source_seed);
  frame = noise_background(p.frame_size, p.frame_size, p, rng);
  const double r = rng.uniform(p.sprite_min_radius, p.sprite_max_radius);
  const double margin = r + 3.0;
  const double cx = rng.uniform(margin, p.frame_size - margin);
  const double cy = rng.uniform(margin, p.frame_size - margin);
  SceneSource src;
  src.category_id = cat.category_id;
  src.box = draw_sprite(frame, cat, cx, cy, r);
  const double phase = rng.uniform(0.0, 2.0 * M_PI);
  src.wave = sine_wave(cat.tone_hz, p.tone_amplitude, phase, p.duration_s, p.sample_rate);
  return src;
}

}  // namespace detail

inline std::vector<int> label_vector(const std::vector<SceneSource>& sources, int category_count) {
  std::vector<int> y(static_cast<size_t>(category_count), 0);
  for (const SceneSource& s : sources) y[static_cast<size_t>(s.category_id)] = 1;
  return y;
}

inline SceneSample make_solo_sample(const std::vector<CategorySpec>& categories, uint64_t seed,
                                    const SceneParams& params = {}) {
  require(!categories.empty(), "make_solo_sample: empty category list");
  Rng rng(derive_seed(seed, 0));
  const int cat_idx = static_cast<int>(rng.uniform_int(static_cast<int64_t>(categories.size())));

  SceneSample sample;
  sample.seed = seed;
  SceneSource src = detail::render_source(sample.image, categories[static_cast<size_t>(cat_idx)],
                                          params, derive_seed(seed, 1));
  sample.sources.push_back(std::move(src));
  sample.mixture = sample.sources[0].wave;
  sample.label = label_vector(sample.sources, static_cast<int>(categories.size()));
  return sample;
}

// n_sources solo frames concatenated left-to-right; mixture is the waveform
// sum. Categories are drawn without replacement so spectra stay separable.
inline SceneSample make_duet_sample(const std::vector<CategorySpec>& categories, uint64_t seed,
                                    int n_sources = 2, const SceneParams& params = {}) {
  require(n_sources >= 2, "make_duet_sample: n_sources must be >= 2");
  require(static_cast<size_t>(n_sources) <= categories.size(),
          "make_duet_sample: n_sources exceeds distinct categories");
  Rng rng(derive_seed(seed, 0));

  std::vector<int> order(categories.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  rng.shuffle(order);
  order.resize(static_cast<size_t>(n_sources));

  SceneSample sample;
  sample.seed = seed;
  std::vector<Waveform> waves;
  for (int i = 0; i < n_sources; ++i) {
    Image frame;
    SceneSource src =
        detail::render_source(frame, categories[static_cast<size_t>(order[static_cast<size_t>(i)])],
                              params, derive_seed(seed, static_cast<uint64_t>(i) + 1));
    src.box[0] += i * params.frame_size;
    src.box[2] += i * params.frame_size;
    waves.push_back(src.wave);
    sample.sources.push_back(std::move(src));
    sample.image = (i == 0) ? std::move(frame) : concat_frames(sample.image, frame);
  }
  sample.mixture = mix_waveforms(waves);
  sample.label = label_vector(sample.sources, static_cast<int>(categories.size()));
  return sample;
}

inline SceneSample make_sample(const std::vector<CategorySpec>& categories, uint64_t seed,
                               int n_sources, const SceneParams& params = {}) {
  return n_sources == 1 ? make_solo_sample(categories, seed, params)
                        : make_duet_sample(categories, seed, n_sources, params);
}

// Binary H x W ground-truth mask for one source (rasterized box).
inline Tensor<uint8_t> gt_mask(const SceneSample& sample, int source_index) {
  const SceneSource& s = sample.sources[static_cast<size_t>(source_index)];
  Tensor<uint8_t> mask({sample.image.height, sample.image.width});
  for (int y = s.box[1]; y < s.box[3]; ++y)
    for (int x = s.box[0]; x < s.box[2]; ++x) mask.at(y, x) = 1;
  return mask;
}

// ---------------------------------------------------------------------------
// Manifests: UTF-8, one JSON object per line.
// ---------------------------------------------------------------------------

struct ManifestRecord {
  uint64_t seed = 0;
  std::vector<int> categories;             // per source, frame order
  std::vector<std::array<int, 4>> boxes;   // per source, concatenated-frame pixels
  std::string image_path;                  // may be empty: sample is seed-reproducible
  std::string audio_path;
};

inline ManifestRecord record_from_sample(const SceneSample& sample, std::string image_path = "",
                                         std::string audio_path = "") {
  ManifestRecord r;
  r.seed = sample.seed;
  for (const SceneSource& s : sample.sources) {
    r.categories.push_back(s.category_id);
    r.boxes.push_back(s.box);
  }
  r.image_path = std::move(image_path);
  r.audio_path = std::move(audio_path);
  return r;
}

inline void write_manifest(const std::vector<ManifestRecord>& records, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("manifest: cannot open for write: " + path);
  for (const ManifestRecord& r : records) {
    nlohmann::json j;
    j["seed"] = r.seed;
    j["categories"] = r.categories;
    std::vector<std::vector<int>> boxes;
    for (const auto& b : r.boxes) boxes.push_back({b[0], b[1], b[2], b[3]});
    j["boxes"] = boxes;
    j["image_path"] = r.image_path;
    j["audio_path"] = r.audio_path;
    f << j.dump() << "\n";
  }
}

inline std::vector<ManifestRecord> read_manifest(const std::string& path,
                                                 int frame_size = 224) {
  std::ifstream f(path);
  if (!f) throw parse_error("manifest: cannot open: " + path);
  std::vector<ManifestRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = "manifest line " + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw parse_error(where + ": " + e.what());
    }
    try {
      ManifestRecord r;
      r.seed = j.at("seed").get<uint64_t>();
      r.categories = j.at("categories").get<std::vector<int>>();
      const auto boxes = j.at("boxes").get<std::vector<std::vector<int>>>();
      for (const auto& b : boxes) {
        if (b.size() != 4) throw parse_error(where + ": box must have 4 coordinates");
        r.boxes.push_back({b[0], b[1], b[2], b[3]});
      }
      r.image_path = j.at("image_path").get<std::string>();
      r.audio_path = j.at("audio_path").get<std::string>();
      if (r.categories.empty()) throw parse_error(where + ": no sources");
      if (r.categories.size() != r.boxes.size())
        throw parse_error(where + ": categories/boxes count mismatch");
      const int width = frame_size * static_cast<int>(r.categories.size());
      for (const auto& b : r.boxes) {
        if (!(0 <= b[0] && b[0] < b[2] && b[2] <= width && 0 <= b[1] && b[1] < b[3] &&
              b[3] <= frame_size))
          throw parse_error(where + ": box outside image bounds");
      }
      records.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw parse_error(where + ": " + e.what());
    }
  }
  return records;
}

// Regenerates the sample a record describes and cross-checks the stored
// metadata, so stale manifests fail loudly instead of training silently on
// the wrong scene.
inline SceneSample sample_from_record(const ManifestRecord& r,
                                      const std::vector<CategorySpec>& categories,
                                      const SceneParams& params = {}) {
  SceneSample s = make_sample(categories, r.seed, static_cast<int>(r.categories.size()), params);
  for (size_t i = 0; i < r.categories.size(); ++i) {
    if (s.sources[i].category_id != r.categories[i] || s.sources[i].box != r.boxes[i])
      throw parse_error("manifest: record (seed " + std::to_string(r.seed) +
                        ") does not match regenerated sample; wrong category table or params?");
  }
  return s;
}

}  // namespace avgn

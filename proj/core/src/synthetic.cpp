#include "slideseek/synthetic.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

namespace slideseek {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

std::int64_t box_intersection_area(const Box& a, const Box& b) {
  std::int64_t w = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
  std::int64_t h = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
  return (w > 0 && h > 0) ? w * h : 0;
}

namespace {

double splitmix64_to_unit(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  x = x ^ (x >> 31);
  return static_cast<double>(x >> 11) * 0x1.0p-53;
}

double smoothstep(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

/// Coverage of the point (x, y) by a box with the given edge transition
/// width; 0.5 exactly on the box boundary, 0/1 for hard edges.
double box_coverage(const Box& b, double x, double y, double softness) {
  double dx = std::min(x - b.x0, static_cast<double>(b.x1) - x);
  double dy = std::min(y - b.y0, static_cast<double>(b.y1) - y);
  double d = std::min(dx, dy);
  if (softness <= 0.0) return d >= 0.0 ? 1.0 : 0.0;
  return smoothstep(d / softness + 0.5);
}

struct Palette {
  double bg[3] = {244, 243, 241};
  double tissue[3] = {228, 178, 205};
  double lesion[3] = {150, 92, 162};
};

RasterImage render_base_level(const SyntheticSlideSpec& spec) {
  Palette pal;
  RasterImage img(static_cast<int>(spec.width), static_cast<int>(spec.height));
  const BackgroundTexture& tex = spec.texture;
  const double two_pi = 6.283185307179586;
  const double phase1 = splitmix64_to_unit(spec.rng_seed) * two_pi;
  const double phase2 = splitmix64_to_unit(spec.rng_seed ^ 0x5bd1e995u) * two_pi;

  for (std::int64_t y = 0; y < spec.height; ++y) {
    double wave_y = std::sin(two_pi * static_cast<double>(y) / tex.wave_period + phase2);
    std::uint8_t* row = img.at(0, static_cast<int>(y));
    for (std::int64_t x = 0; x < spec.width; ++x) {
      double ct = 0.0;
      for (const Box& b : spec.tissue_blobs) {
        ct = std::max(ct, box_coverage(b, static_cast<double>(x), static_cast<double>(y), tex.edge_softness));
      }
      double cl = 0.0;
      for (const LesionFocus& f : spec.lesion_foci) {
        cl = std::max(cl, box_coverage(f.box, static_cast<double>(x), static_cast<double>(y), tex.edge_softness));
      }
      double wave = 0.5 * tex.wave_amplitude *
                    (std::sin(two_pi * static_cast<double>(x) / tex.wave_period + phase1) + wave_y);
      double noise = 0.0;
      if (tex.noise_amplitude > 0.0) {
        std::uint64_t k = spec.rng_seed ^ (static_cast<std::uint64_t>(x) << 24) ^ static_cast<std::uint64_t>(y);
        noise = (2.0 * splitmix64_to_unit(k) - 1.0) * tex.noise_amplitude;
      }
      for (int c = 0; c < 3; ++c) {
        double v = pal.bg[c] + ct * (pal.tissue[c] + wave - pal.bg[c]);
        v += cl * (pal.lesion[c] - v);
        v += noise;
        row[x * 3 + c] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0l, 255l));
      }
    }
  }
  return img;
}

/// Integer-factor block average with partial edge blocks.
RasterImage downsample_blocks(const RasterImage& src, int ds) {
  int out_w = static_cast<int>((src.width + ds - 1) / ds);
  int out_h = static_cast<int>((src.height + ds - 1) / ds);
  RasterImage out(out_w, out_h);
  for (int oy = 0; oy < out_h; ++oy) {
    int y0 = oy * ds, y1 = std::min(src.height, y0 + ds);
    for (int ox = 0; ox < out_w; ++ox) {
      int x0 = ox * ds, x1 = std::min(src.width, x0 + ds);
      std::int64_t sum[3] = {0, 0, 0};
      for (int y = y0; y < y1; ++y) {
        const std::uint8_t* p = src.at(x0, y);
        for (int x = x0; x < x1; ++x, p += 3) {
          sum[0] += p[0];
          sum[1] += p[1];
          sum[2] += p[2];
        }
      }
      std::int64_t n = static_cast<std::int64_t>(x1 - x0) * (y1 - y0);
      std::uint8_t* o = out.at(ox, oy);
      for (int c = 0; c < 3; ++c) {
        o[c] = static_cast<std::uint8_t>((sum[c] + n / 2) / n);
      }
    }
  }
  return out;
}

void write_level_tiles(const RasterImage& level_img, const fs::path& level_dir, int tile_edge) {
  fs::create_directories(level_dir);
  int cols = (level_img.width + tile_edge - 1) / tile_edge;
  int rows = (level_img.height + tile_edge - 1) / tile_edge;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      int x0 = c * tile_edge, y0 = r * tile_edge;
      int w = std::min(tile_edge, level_img.width - x0);
      int h = std::min(tile_edge, level_img.height - y0);
      RasterImage tile(w, h);
      for (int y = 0; y < h; ++y) {
        std::copy_n(level_img.at(x0, y0 + y), static_cast<std::size_t>(w) * 3, tile.at(0, y));
      }
      save_png(level_dir / ("tile_" + std::to_string(c) + "_" + std::to_string(r) + ".png"), tile);
    }
  }
}

json box_to_json(const Box& b) {
  return json{{"x0", b.x0}, {"y0", b.y0}, {"x1", b.x1}, {"y1", b.y1}};
}

Box box_from_json(const json& j) {
  return Box{j.at("x0").get<std::int64_t>(), j.at("y0").get<std::int64_t>(),
             j.at("x1").get<std::int64_t>(), j.at("y1").get<std::int64_t>()};
}

}  // namespace

PyramidSlide generate_synthetic(const SyntheticSlideSpec& spec, const fs::path& out) {
  if (spec.width <= 0 || spec.height <= 0) throw SlideError("synthetic spec has empty dimensions");
  for (const LesionFocus& f : spec.lesion_foci) {
    bool inside = false;
    for (const Box& b : spec.tissue_blobs) {
      if (f.box.x0 >= b.x0 && f.box.y0 >= b.y0 && f.box.x1 <= b.x1 && f.box.y1 <= b.y1) {
        inside = true;
        break;
      }
    }
    if (!inside) throw SlideError("lesion focus outside every tissue blob");
  }

  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw SlideError("cannot create output directory: " + out.string());

  RasterImage base = render_base_level(spec);

  ordered_json manifest;
  manifest["slide_id"] = spec.slide_id;
  manifest["base_width"] = spec.width;
  manifest["base_height"] = spec.height;
  manifest["base_magnification"] = spec.base_magnification;
  manifest["mpp"] = nullptr;
  manifest["tile_edge"] = spec.tile_edge;
  manifest["levels"] = ordered_json::array();

  for (std::size_t i = 0; i < spec.downsamples.size(); ++i) {
    int ds = spec.downsamples[i];
    RasterImage level_img = ds == 1 ? base : downsample_blocks(base, ds);
    write_level_tiles(level_img, out / ("level_" + std::to_string(i)), spec.tile_edge);
    manifest["levels"].push_back(
        {{"downsample", ds},
         {"cols", (level_img.width + spec.tile_edge - 1) / spec.tile_edge},
         {"rows", (level_img.height + spec.tile_edge - 1) / spec.tile_edge}});
  }

  {
    std::ofstream m(out / "manifest.json");
    if (!m) throw SlideError("cannot write manifest: " + (out / "manifest.json").string());
    m << manifest.dump(2) << "\n";
  }
  {
    auto box_ordered = [](const Box& b) {
      return ordered_json{{"x0", b.x0}, {"y0", b.y0}, {"x1", b.x1}, {"y1", b.y1}};
    };
    ordered_json truth;
    truth["tissue"] = ordered_json::array();
    for (const Box& b : spec.tissue_blobs) truth["tissue"].push_back(box_ordered(b));
    truth["lesions"] = ordered_json::array();
    for (const LesionFocus& f : spec.lesion_foci) {
      truth["lesions"].push_back(ordered_json{{"box", box_ordered(f.box)}, {"label", f.label}});
    }
    std::ofstream t(out / "truth.json");
    if (!t) throw SlideError("cannot write truth.json");
    t << truth.dump(2) << "\n";
  }
  return open_slide(out);
}

std::optional<SlideTruth> load_truth(const fs::path& slide_dir) {
  std::ifstream in(slide_dir / "truth.json");
  if (!in) return std::nullopt;
  json j;
  in >> j;
  SlideTruth truth;
  for (const auto& b : j.at("tissue")) truth.tissue_blobs.push_back(box_from_json(b));
  for (const auto& l : j.at("lesions")) {
    truth.lesion_foci.push_back({box_from_json(l.at("box")), l.at("label").get<std::string>()});
  }
  return truth;
}

namespace {

/// Nudges v so that v mod period lies in [lo, hi]; keeps screening tile grids
/// from coinciding with tissue edges.
std::int64_t away_from_grid(std::int64_t v, std::int64_t period, std::int64_t lo, std::int64_t hi) {
  std::int64_t m = v % period;
  if (m < lo) return v + (lo - m);
  if (m > hi) return v - (m - hi);
  return v;
}

/// Moves v downward (never up) so that v mod period lies in [lo, hi].
std::int64_t pull_down_into_band(std::int64_t v, std::int64_t period, std::int64_t lo,
                                 std::int64_t hi) {
  std::int64_t m = v % period;
  if (m >= lo && m <= hi) return v;
  if (m > hi) return v - (m - hi);
  return v - (m + period - hi);
}

}  // namespace

SyntheticSlideSpec make_random_slide_spec(std::uint64_t seed, std::int64_t width,
                                          std::int64_t height, int min_foci, int max_foci) {
  std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ull + 0x1234567ull);
  auto uniform = [&](std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng);
  };

  SyntheticSlideSpec spec;
  spec.slide_id = "rand-" + std::to_string(seed);
  spec.width = width;
  spec.height = height;
  spec.base_magnification = 20.0;
  spec.tile_edge = 512;
  spec.rng_seed = seed;
  spec.texture.wave_period = 512.0;
  spec.texture.wave_amplitude = 8.0;
  spec.texture.edge_softness = 0.0;
  spec.texture.noise_amplitude = 3.0;

  const std::int64_t margin = 160;
  std::int64_t max_w = std::min<std::int64_t>(3480, width - 2 * margin);
  std::int64_t max_h = std::min<std::int64_t>(3480, height - 2 * margin);
  std::int64_t min_w = max_w * 3 / 4;
  std::int64_t min_h = max_h * 3 / 4;
  // Large slides get wide blobs so the band placement below can shave up to
  // ~650 px while still leaving two full-size focus slots per axis.
  if (max_w >= 3400) min_w = 3100;
  if (max_h >= 3400) min_h = 3100;
  std::int64_t blob_w = uniform(min_w, max_w);
  std::int64_t blob_h = uniform(min_h, max_h);
  std::int64_t bx0 = uniform(margin, std::max<std::int64_t>(margin, width - margin - blob_w));
  std::int64_t by0 = uniform(margin, std::max<std::int64_t>(margin, height - margin - blob_h));
  std::int64_t bx1, by1;
  // Wide blobs: start the edge late in its 896-cell and end it early in its
  // cell. The slide-aligned 20x tile span then exceeds the box-aligned
  // screening sweep grid by one tile per axis, and no edge coincides with
  // either grid. Narrow blobs just stay off the grid lines.
  if (blob_w >= 3000) {
    bx0 = away_from_grid(bx0, 896, 650, 796);
    bx1 = pull_down_into_band(bx0 + blob_w, 896, 100, 350);
  } else {
    bx0 = away_from_grid(bx0, 896, 100, 796);
    bx1 = away_from_grid(bx0 + blob_w, 896, 100, 796);
  }
  if (blob_h >= 3000) {
    by0 = away_from_grid(by0, 896, 650, 796);
    by1 = pull_down_into_band(by0 + blob_h, 896, 100, 350);
  } else {
    by0 = away_from_grid(by0, 896, 100, 796);
    by1 = away_from_grid(by0 + blob_h, 896, 100, 796);
  }
  Box blob{bx0, by0, std::min(bx1, width - 64), std::min(by1, height - 64)};
  spec.tissue_blobs.push_back(blob);

  static const char* kLabels[] = {"invasive carcinoma", "adenocarcinoma", "lymphoma"};
  std::string label = kLabels[uniform(0, 2)];
  int n_foci = static_cast<int>(uniform(min_foci, max_foci));

  // 2x2 slot grid inside the blob; each focus takes one slot with jitter, so
  // foci are always disjoint and inside tissue.
  const std::int64_t inner_margin = 48;
  std::int64_t slot_w = (blob.x1 - blob.x0 - 2 * inner_margin) / 2;
  std::int64_t slot_h = (blob.y1 - blob.y0 - 2 * inner_margin) / 2;
  std::array<int, 4> slots = {0, 1, 2, 3};
  std::shuffle(slots.begin(), slots.end(), rng);
  for (int i = 0; i < n_foci && i < 4; ++i) {
    std::int64_t fw = std::min<std::int64_t>(uniform(1024, 1200), slot_w - 16);
    std::int64_t fh = std::min<std::int64_t>(uniform(1024, 1200), slot_h - 16);
    fw = std::max<std::int64_t>(fw, 64);
    fh = std::max<std::int64_t>(fh, 64);
    int sx = slots[static_cast<std::size_t>(i)] % 2;
    int sy = slots[static_cast<std::size_t>(i)] / 2;
    std::int64_t ox = blob.x0 + inner_margin + sx * slot_w;
    std::int64_t oy = blob.y0 + inner_margin + sy * slot_h;
    std::int64_t fx0 = ox + uniform(0, std::max<std::int64_t>(0, slot_w - fw - 16));
    std::int64_t fy0 = oy + uniform(0, std::max<std::int64_t>(0, slot_h - fh - 16));
    spec.lesion_foci.push_back({Box{fx0, fy0, fx0 + fw, fy0 + fh}, label});
  }
  return spec;
}

SyntheticSlideSpec parse_slide_spec_json(const fs::path& spec_file) {
  std::ifstream in(spec_file);
  if (!in) throw SlideError("spec file not found: " + spec_file.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw SlideError("spec file unparsable: " + std::string(e.what()));
  }

  if (j.contains("random")) {
    const auto& r = j["random"];
    return make_random_slide_spec(r.at("seed").get<std::uint64_t>(),
                                  r.at("width").get<std::int64_t>(),
                                  r.at("height").get<std::int64_t>(),
                                  r.value("min_foci", 1), r.value("max_foci", 3));
  }

  SyntheticSlideSpec spec;
  spec.slide_id = j.value("slide_id", std::string("synthetic"));
  spec.width = j.at("width").get<std::int64_t>();
  spec.height = j.at("height").get<std::int64_t>();
  spec.base_magnification = j.value("base_magnification", 20.0);
  spec.tile_edge = j.value("tile_edge", 512);
  if (j.contains("downsamples")) spec.downsamples = j["downsamples"].get<std::vector<int>>();
  spec.rng_seed = j.value("seed", 0ull);
  if (j.contains("texture")) {
    const auto& t = j["texture"];
    spec.texture.wave_period = t.value("wave_period", spec.texture.wave_period);
    spec.texture.wave_amplitude = t.value("wave_amplitude", spec.texture.wave_amplitude);
    spec.texture.edge_softness = t.value("edge_softness", spec.texture.edge_softness);
    spec.texture.noise_amplitude = t.value("noise_amplitude", spec.texture.noise_amplitude);
  }
  for (const auto& b : j.value("tissue", json::array())) spec.tissue_blobs.push_back(box_from_json(b));
  for (const auto& l : j.value("lesions", json::array())) {
    spec.lesion_foci.push_back({box_from_json(l.at("box")), l.at("label").get<std::string>()});
  }
  return spec;
}

}  // namespace slideseek

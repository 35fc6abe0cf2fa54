#include "slideseek/slide.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <queue>

namespace slideseek {

namespace fs = std::filesystem;
using nlohmann::json;

bool magnification_allowed(double magnification, double base_magnification) {
  if (magnification > base_magnification + 1e-9) return false;
  for (double m : kAllowedMagnifications) {
    if (std::abs(m - magnification) < 1e-9) return true;
  }
  return false;
}

PyramidSlide open_slide(const fs::path& dir) {
  fs::path manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw SlideError("manifest not found: " + manifest_path.string());
  json m;
  try {
    in >> m;
  } catch (const json::exception& e) {
    throw SlideError("manifest unreadable: " + manifest_path.string() + ": " + e.what());
  }

  PyramidSlide slide;
  slide.root = dir;
  try {
    slide.slide_id = m.at("slide_id").get<std::string>();
    slide.base_width = m.at("base_width").get<std::int64_t>();
    slide.base_height = m.at("base_height").get<std::int64_t>();
    slide.base_magnification = m.at("base_magnification").get<double>();
    slide.tile_edge = m.at("tile_edge").get<int>();
    if (m.contains("mpp") && !m["mpp"].is_null()) slide.mpp = m["mpp"].get<double>();
    for (const auto& lv : m.at("levels")) {
      PyramidLevel level;
      level.downsample = lv.at("downsample").get<int>();
      level.cols = lv.at("cols").get<int>();
      level.rows = lv.at("rows").get<int>();
      level.width = (slide.base_width + level.downsample - 1) / level.downsample;
      level.height = (slide.base_height + level.downsample - 1) / level.downsample;
      slide.levels.push_back(level);
    }
  } catch (const json::exception& e) {
    throw SlideError("manifest missing field: " + std::string(e.what()));
  }

  if (slide.base_width <= 0 || slide.base_height <= 0) throw SlideError("non-positive base dimensions");
  if (slide.tile_edge <= 0) throw SlideError("non-positive tile_edge");
  if (slide.levels.empty()) throw SlideError("manifest has no levels");
  if (slide.levels[0].downsample != 1) throw SlideError("levels[0] downsample must be 1");
  for (std::size_t i = 1; i < slide.levels.size(); ++i) {
    if (slide.levels[i].downsample <= slide.levels[i - 1].downsample) {
      throw SlideError("non-monotonic downsamples");
    }
  }
  for (std::size_t i = 0; i < slide.levels.size(); ++i) {
    const auto& lv = slide.levels[i];
    int want_cols = static_cast<int>((lv.width + slide.tile_edge - 1) / slide.tile_edge);
    int want_rows = static_cast<int>((lv.height + slide.tile_edge - 1) / slide.tile_edge);
    if (lv.cols != want_cols || lv.rows != want_rows) {
      throw SlideError("inconsistent level geometry at level " + std::to_string(i));
    }
    fs::path level_dir = dir / ("level_" + std::to_string(i));
    if (!fs::is_directory(level_dir)) {
      throw SlideError("missing level directory: " + level_dir.string());
    }
  }
  return slide;
}

namespace {

fs::path tile_path(const PyramidSlide& slide, int level, int col, int row) {
  return slide.root / ("level_" + std::to_string(level)) /
         ("tile_" + std::to_string(col) + "_" + std::to_string(row) + ".png");
}

/// Mosaics the integer pixel rect [x0,x1)x[y0,y1) of a pyramid level from its
/// storage tiles. Coordinates are level pixels and must be in bounds.
RasterImage read_level_rect(const PyramidSlide& slide, int level_idx, std::int64_t x0,
                            std::int64_t y0, std::int64_t x1, std::int64_t y1) {
  const PyramidLevel& level = slide.levels[static_cast<std::size_t>(level_idx)];
  const int te = slide.tile_edge;
  RasterImage out(static_cast<int>(x1 - x0), static_cast<int>(y1 - y0));
  int c0 = static_cast<int>(x0 / te), c1 = static_cast<int>((x1 - 1) / te);
  int r0 = static_cast<int>(y0 / te), r1 = static_cast<int>((y1 - 1) / te);
  for (int r = r0; r <= r1; ++r) {
    for (int c = c0; c <= c1; ++c) {
      fs::path p = tile_path(slide, level_idx, c, r);
      RasterImage tile;
      try {
        tile = load_png(p);
      } catch (const ImageError& e) {
        throw SlideError("unreadable tile: " + p.string() + ": " + e.what());
      }
      std::int64_t expect_w = std::min<std::int64_t>(te, level.width - static_cast<std::int64_t>(c) * te);
      std::int64_t expect_h = std::min<std::int64_t>(te, level.height - static_cast<std::int64_t>(r) * te);
      if (tile.width != expect_w || tile.height != expect_h) {
        throw SlideError("tile has wrong dimensions: " + p.string());
      }
      std::int64_t tx0 = static_cast<std::int64_t>(c) * te, ty0 = static_cast<std::int64_t>(r) * te;
      std::int64_t sx0 = std::max(x0, tx0), sx1 = std::min(x1, tx0 + tile.width);
      std::int64_t sy0 = std::max(y0, ty0), sy1 = std::min(y1, ty0 + tile.height);
      for (std::int64_t y = sy0; y < sy1; ++y) {
        const std::uint8_t* src = tile.at(static_cast<int>(sx0 - tx0), static_cast<int>(y - ty0));
        std::uint8_t* dst = out.at(static_cast<int>(sx0 - x0), static_cast<int>(y - y0));
        std::copy_n(src, static_cast<std::size_t>(sx1 - sx0) * 3, dst);
      }
    }
  }
  return out;
}

int pick_level(const PyramidSlide& slide, double total_downsample) {
  int best = 0;
  for (std::size_t i = 0; i < slide.levels.size(); ++i) {
    if (slide.levels[i].downsample <= total_downsample + 1e-9) best = static_cast<int>(i);
  }
  return best;
}

/// Deepest level whose long edge still fits max_edge, or the deepest level.
int pick_overview_level(const PyramidSlide& slide, int max_edge) {
  for (std::size_t i = 0; i < slide.levels.size(); ++i) {
    if (std::max(slide.levels[i].width, slide.levels[i].height) <= max_edge) {
      return static_cast<int>(i);
    }
  }
  return static_cast<int>(slide.levels.size()) - 1;
}

}  // namespace

std::vector<std::string> validate_region(const PyramidSlide& slide, const RegionSpec& region) {
  std::vector<std::string> v;
  if (!(region.x0 >= 0 && region.x0 < region.x1 && region.x1 <= slide.base_width &&
        region.y0 >= 0 && region.y0 < region.y1 && region.y1 <= slide.base_height)) {
    v.push_back("region out of bounds");
  }
  if (!magnification_allowed(region.magnification, slide.base_magnification)) {
    v.push_back("unsupported magnification " + std::to_string(region.magnification));
  }
  return v;
}

RasterImage read_region(const PyramidSlide& slide, const RegionSpec& region, int max_edge) {
  auto violations = validate_region(slide, region);
  if (!violations.empty()) throw SlideError("read_region: " + violations.front());
  if (max_edge < 1) throw SlideError("read_region: max_edge must be positive");

  const double scale = region.magnification / slide.base_magnification;
  int out_w = static_cast<int>(std::max<std::int64_t>(1, std::llround(region.width() * scale)));
  int out_h = static_cast<int>(std::max<std::int64_t>(1, std::llround(region.height() * scale)));
  if (std::max(out_w, out_h) > max_edge) {
    double shrink = static_cast<double>(max_edge) / std::max(out_w, out_h);
    out_w = std::max(1, static_cast<int>(std::llround(out_w * shrink)));
    out_h = std::max(1, static_cast<int>(std::llround(out_h * shrink)));
  }

  const int level_idx = pick_level(slide, 1.0 / scale);
  const int ds = slide.levels[static_cast<std::size_t>(level_idx)].downsample;

  double lx0 = static_cast<double>(region.x0) / ds;
  double ly0 = static_cast<double>(region.y0) / ds;
  double lx1 = static_cast<double>(region.x1) / ds;
  double ly1 = static_cast<double>(region.y1) / ds;

  std::int64_t ix0 = static_cast<std::int64_t>(std::floor(lx0));
  std::int64_t iy0 = static_cast<std::int64_t>(std::floor(ly0));
  std::int64_t ix1 = std::min<std::int64_t>(static_cast<std::int64_t>(std::ceil(lx1)),
                                            slide.levels[static_cast<std::size_t>(level_idx)].width);
  std::int64_t iy1 = std::min<std::int64_t>(static_cast<std::int64_t>(std::ceil(ly1)),
                                            slide.levels[static_cast<std::size_t>(level_idx)].height);

  RasterImage crop = read_level_rect(slide, level_idx, ix0, iy0, ix1, iy1);

  // Exact crop path: aligned window, unit scale.
  if (ds * out_w == region.width() && ds * out_h == region.height() && lx0 == ix0 && ly0 == iy0 &&
      crop.width == out_w && crop.height == out_h) {
    return crop;
  }
  return resample_area(crop, lx0 - ix0, ly0 - iy0, lx1 - ix0, ly1 - iy0, out_w, out_h);
}

namespace {

int otsu_threshold(const std::array<std::int64_t, 256>& hist) {
  std::int64_t total = 0;
  double sum_all = 0;
  for (int i = 0; i < 256; ++i) {
    total += hist[static_cast<std::size_t>(i)];
    sum_all += static_cast<double>(i) * hist[static_cast<std::size_t>(i)];
  }
  if (total == 0) return 255;
  double sum_b = 0;
  std::int64_t w_b = 0;
  double best_var = -1;
  int best_t = 255;
  for (int t = 0; t < 256; ++t) {
    w_b += hist[static_cast<std::size_t>(t)];
    if (w_b == 0) continue;
    std::int64_t w_f = total - w_b;
    if (w_f == 0) break;
    sum_b += static_cast<double>(t) * hist[static_cast<std::size_t>(t)];
    double m_b = sum_b / w_b;
    double m_f = (sum_all - sum_b) / w_f;
    double between = static_cast<double>(w_b) * w_f * (m_b - m_f) * (m_b - m_f);
    if (between > best_var) {
      best_var = between;
      best_t = t;
    }
  }
  return best_t;
}

}  // namespace

std::vector<TissueBox> detect_tissue(const PyramidSlide& slide, const TissueDetectParams& params) {
  int level_idx = pick_overview_level(slide, params.max_thumb_edge);
  const PyramidLevel& level = slide.levels[static_cast<std::size_t>(level_idx)];
  RasterImage thumb = read_level_rect(slide, level_idx, 0, 0, level.width, level.height);
  long edge = std::max(thumb.width, thumb.height);
  if (edge > params.max_thumb_edge) {
    double shrink = static_cast<double>(params.max_thumb_edge) / edge;
    thumb = resize_area(thumb, std::max(1, static_cast<int>(std::llround(thumb.width * shrink))),
                        std::max(1, static_cast<int>(std::llround(thumb.height * shrink))));
  }
  const double dsx = static_cast<double>(slide.base_width) / thumb.width;
  const double dsy = static_cast<double>(slide.base_height) / thumb.height;

  const int w = thumb.width, h = thumb.height;
  std::vector<std::uint8_t> sat(static_cast<std::size_t>(w) * h);
  std::array<std::int64_t, 256> hist{};
  for (int y = 0; y < h; ++y) {
    const std::uint8_t* row = thumb.at(0, y);
    for (int x = 0; x < w; ++x) {
      int r = row[x * 3], g = row[x * 3 + 1], b = row[x * 3 + 2];
      int mx = std::max({r, g, b}), mn = std::min({r, g, b});
      int s = mx == 0 ? 0 : 255 * (mx - mn) / mx;
      sat[static_cast<std::size_t>(y) * w + x] = static_cast<std::uint8_t>(s);
      ++hist[static_cast<std::size_t>(s)];
    }
  }

  int thr = otsu_threshold(hist);
  // Guard against a saturation-flat slide (pure background): Otsu on a
  // near-degenerate histogram would split noise.
  if (thr < 8) thr = 8;

  std::vector<std::uint8_t> fg(sat.size());
  for (std::size_t i = 0; i < sat.size(); ++i) fg[i] = sat[i] > thr ? 1 : 0;

  // Morphological close, 3x3: dilate then erode.
  auto dilate_or_erode = [&](const std::vector<std::uint8_t>& src, bool dilate) {
    std::vector<std::uint8_t> dst(src.size());
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        std::uint8_t v = dilate ? 0 : 1;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            int nx = x + dx, ny = y + dy;
            if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
            std::uint8_t s = src[static_cast<std::size_t>(ny) * w + nx];
            if (dilate) v = std::max(v, s);
            else v = std::min(v, s);
          }
        }
        dst[static_cast<std::size_t>(y) * w + x] = v;
      }
    }
    return dst;
  };
  fg = dilate_or_erode(dilate_or_erode(fg, true), false);

  // Connected components, 8-connectivity.
  std::vector<int> label(fg.size(), -1);
  struct Comp {
    std::int64_t x0, y0, x1, y1, area;
  };
  std::vector<Comp> comps;
  for (int sy = 0; sy < h; ++sy) {
    for (int sx = 0; sx < w; ++sx) {
      std::size_t si = static_cast<std::size_t>(sy) * w + sx;
      if (!fg[si] || label[si] >= 0) continue;
      int id = static_cast<int>(comps.size());
      Comp comp{sx, sy, sx + 1, sy + 1, 0};
      std::queue<std::pair<int, int>> q;
      q.emplace(sx, sy);
      label[si] = id;
      while (!q.empty()) {
        auto [x, y] = q.front();
        q.pop();
        ++comp.area;
        comp.x0 = std::min<std::int64_t>(comp.x0, x);
        comp.y0 = std::min<std::int64_t>(comp.y0, y);
        comp.x1 = std::max<std::int64_t>(comp.x1, x + 1);
        comp.y1 = std::max<std::int64_t>(comp.y1, y + 1);
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            int nx = x + dx, ny = y + dy;
            if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
            std::size_t ni = static_cast<std::size_t>(ny) * w + nx;
            if (fg[ni] && label[ni] < 0) {
              label[ni] = id;
              q.emplace(nx, ny);
            }
          }
        }
      }
      comps.push_back(comp);
    }
  }

  double min_area = params.min_area_fraction * w * h;
  std::erase_if(comps, [&](const Comp& c) { return static_cast<double>(c.area) < min_area; });

  // Merge boxes whose gap is below merge_gap, to a fixpoint.
  double merge_gap = params.merge_gap_fraction * std::max(w, h);
  bool merged = true;
  while (merged) {
    merged = false;
    for (std::size_t i = 0; i < comps.size() && !merged; ++i) {
      for (std::size_t j = i + 1; j < comps.size() && !merged; ++j) {
        double gx = std::max<double>(
            0, std::max(comps[i].x0, comps[j].x0) - static_cast<double>(std::min(comps[i].x1, comps[j].x1)));
        double gy = std::max<double>(
            0, std::max(comps[i].y0, comps[j].y0) - static_cast<double>(std::min(comps[i].y1, comps[j].y1)));
        if (gx < merge_gap && gy < merge_gap) {
          comps[i].x0 = std::min(comps[i].x0, comps[j].x0);
          comps[i].y0 = std::min(comps[i].y0, comps[j].y0);
          comps[i].x1 = std::max(comps[i].x1, comps[j].x1);
          comps[i].y1 = std::max(comps[i].y1, comps[j].y1);
          comps[i].area += comps[j].area;
          comps.erase(comps.begin() + static_cast<std::ptrdiff_t>(j));
          merged = true;
        }
      }
    }
  }

  std::sort(comps.begin(), comps.end(), [](const Comp& a, const Comp& b) {
    return std::tie(a.y0, a.x0) < std::tie(b.y0, b.x0);
  });

  std::vector<TissueBox> boxes;
  for (std::size_t i = 0; i < comps.size(); ++i) {
    TissueBox box;
    box.index = static_cast<int>(i);
    box.x0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(comps[i].x0 * dsx)));
    box.y0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(comps[i].y0 * dsy)));
    box.x1 = std::min<std::int64_t>(slide.base_width, static_cast<std::int64_t>(std::ceil(comps[i].x1 * dsx)));
    box.y1 = std::min<std::int64_t>(slide.base_height, static_cast<std::int64_t>(std::ceil(comps[i].y1 * dsy)));
    boxes.push_back(box);
  }
  return boxes;
}

RasterImage render_thumbnail(const PyramidSlide& slide, std::span<const RegionSpec> visited,
                             int edge) {
  if (edge < 64) throw SlideError("render_thumbnail: edge must be >= 64");
  int level_idx = pick_overview_level(slide, edge);
  const PyramidLevel& level = slide.levels[static_cast<std::size_t>(level_idx)];
  RasterImage thumb = read_level_rect(slide, level_idx, 0, 0, level.width, level.height);
  if (std::max(thumb.width, thumb.height) > edge) {
    double shrink = static_cast<double>(edge) / std::max(thumb.width, thumb.height);
    thumb = resize_area(thumb, std::max(1, static_cast<int>(std::llround(thumb.width * shrink))),
                        std::max(1, static_cast<int>(std::llround(thumb.height * shrink))));
  }
  double sx = static_cast<double>(thumb.width) / slide.base_width;
  double sy = static_cast<double>(thumb.height) / slide.base_height;
  int thickness = std::max(1, thumb.width / 256);
  for (const RegionSpec& r : visited) {
    draw_rect_outline(thumb, static_cast<int>(std::floor(r.x0 * sx)),
                      static_cast<int>(std::floor(r.y0 * sy)),
                      static_cast<int>(std::ceil(r.x1 * sx)),
                      static_cast<int>(std::ceil(r.y1 * sy)), 220, 30, 30, thickness);
  }
  return thumb;
}

}  // namespace slideseek

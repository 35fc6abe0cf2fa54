#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

namespace slideseek {

/// Interleaved 8-bit RGB raster.
struct RasterImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // size == width * height * 3

  RasterImage() = default;
  RasterImage(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 0) {}

  bool empty() const { return width <= 0 || height <= 0; }

  std::uint8_t* at(int x, int y) {
    return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }
  const std::uint8_t* at(int x, int y) const {
    return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }

  bool operator==(const RasterImage& o) const {
    return width == o.width && height == o.height && rgb == o.rgb;
  }
};

struct ImageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Area-average resample of the fractional source window [sx0,sx1)x[sy0,sy1)
/// onto an out_w x out_h raster. Source pixels are treated as unit squares;
/// every output pixel integrates the source with exact fractional coverage,
/// so the filter is a true box average for any (including non-integer) factor
/// and degenerates to a crop when the window is aligned and the scale is 1.
RasterImage resample_area(const RasterImage& src, double sx0, double sy0, double sx1, double sy1,
                          int out_w, int out_h);

/// Whole-image area-average resize.
RasterImage resize_area(const RasterImage& src, int out_w, int out_h);

/// Axis-aligned rectangle outline, clamped to the image. Coordinates are
/// top-left inclusive, bottom-right exclusive.
void draw_rect_outline(RasterImage& img, int x0, int y0, int x1, int y1,
                       std::uint8_t r, std::uint8_t g, std::uint8_t b, int thickness);

/// FNV-1a over dimensions and pixel bytes.
std::uint64_t pixel_digest(const RasterImage& img);

std::vector<std::uint8_t> encode_png(const RasterImage& img);
RasterImage decode_png(const std::vector<std::uint8_t>& bytes);
void save_png(const std::filesystem::path& path, const RasterImage& img);
RasterImage load_png(const std::filesystem::path& path);

}  // namespace slideseek

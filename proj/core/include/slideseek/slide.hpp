#pragma once

#include "slideseek/image.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace slideseek {

struct SlideError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PyramidLevel {
  int downsample = 1;
  std::int64_t width = 0;
  std::int64_t height = 0;
  int cols = 0;  // storage tile grid
  int rows = 0;
};

/// An opened pyramidal slide. All reads after open are const.
struct PyramidSlide {
  std::string slide_id;
  std::int64_t base_width = 0;
  std::int64_t base_height = 0;
  double base_magnification = 20.0;
  std::optional<double> mpp;
  int tile_edge = 512;
  std::vector<PyramidLevel> levels;
  std::filesystem::path root;
};

/// Base-level pixel rectangle, top-left inclusive, bottom-right exclusive,
/// plus the objective power the caller wants it rendered at.
struct RegionSpec {
  std::int64_t x0 = 0;
  std::int64_t y0 = 0;
  std::int64_t x1 = 0;
  std::int64_t y1 = 0;
  double magnification = 0.0;

  std::int64_t width() const { return x1 - x0; }
  std::int64_t height() const { return y1 - y0; }
  bool operator==(const RegionSpec&) const = default;
};

struct TissueBox {
  int index = 0;
  std::int64_t x0 = 0;
  std::int64_t y0 = 0;
  std::int64_t x1 = 0;
  std::int64_t y1 = 0;
  bool operator==(const TissueBox&) const = default;
};

/// Standard objective stops; requests are valid only at stops <= base power.
inline constexpr double kAllowedMagnifications[] = {1.25, 2.5, 5.0, 10.0, 20.0, 40.0};

bool magnification_allowed(double magnification, double base_magnification);

struct TissueDetectParams {
  int max_thumb_edge = 1024;
  double min_area_fraction = 0.0005;  // of thumbnail area
  double merge_gap_fraction = 0.01;   // of thumbnail long edge
};

PyramidSlide open_slide(const std::filesystem::path& dir);

/// Renders `region` at its requested magnification; output extent is
/// round(extent * magnification / base_magnification), further uniformly
/// reduced if either edge exceeds max_edge. Source level is the one with the
/// largest downsample <= base_magnification / magnification.
RasterImage read_region(const PyramidSlide& slide, const RegionSpec& region, int max_edge);

std::vector<TissueBox> detect_tissue(const PyramidSlide& slide,
                                     const TissueDetectParams& params = {});

/// Aspect-preserving thumbnail with visited regions outlined.
RasterImage render_thumbnail(const PyramidSlide& slide, std::span<const RegionSpec> visited,
                             int edge);

/// Validates a region against slide bounds and the allowed magnification set.
/// Returns human-readable violations; empty means valid.
std::vector<std::string> validate_region(const PyramidSlide& slide, const RegionSpec& region);

}  // namespace slideseek

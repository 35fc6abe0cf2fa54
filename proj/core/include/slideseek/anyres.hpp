#pragma once

#include "slideseek/image.hpp"

#include <optional>
#include <vector>

namespace slideseek {

inline constexpr int kTileEdge = 448;
inline constexpr int kMaxInputEdge = 896;
inline constexpr int kTokensPerTile = 128;

/// Placement of an image on the supported tile grids (1x1, 1x2, 2x1, 2x2).
struct GridPlan {
  int grid_cols = 1;
  int grid_rows = 1;
  int scaled_width = 0;   // after the optional fit-to-896 rescale
  int scaled_height = 0;
  bool include_thumbnail = false;

  int padded_width() const { return grid_cols * kTileEdge; }
  int padded_height() const { return grid_rows * kTileEdge; }
  int tile_count() const { return grid_cols * grid_rows + (include_thumbnail ? 1 : 0); }
  bool operator==(const GridPlan&) const = default;
};

struct TileSequence {
  std::optional<RasterImage> thumbnail;  // present iff grid has > 1 tile
  std::vector<RasterImage> tiles;        // row-major grid tiles, 448x448 each
  GridPlan plan;
  int token_count = 0;
};

/// Smallest grid (by tile count, ties to fewer columns) whose padded extent
/// holds the image, after an aspect-preserving rescale into 896x896 when
/// either input dimension exceeds 896.
GridPlan plan_grid(int width, int height);

TileSequence tile_image(const RasterImage& image);

int token_count(int width, int height);

}  // namespace slideseek

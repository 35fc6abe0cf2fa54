#include "slideseek/anyres.hpp"

#include <algorithm>
#include <cmath>

namespace slideseek {

GridPlan plan_grid(int width, int height) {
  if (width < 1 || height < 1) throw ImageError("plan_grid: empty image");

  int sw = width, sh = height;
  if (width > kMaxInputEdge || height > kMaxInputEdge) {
    double s = std::min(static_cast<double>(kMaxInputEdge) / width,
                        static_cast<double>(kMaxInputEdge) / height);
    sw = std::max(1, static_cast<int>(std::lround(width * s)));
    sh = std::max(1, static_cast<int>(std::lround(height * s)));
  }

  // Candidates ordered by (tile count, columns).
  static constexpr struct {
    int cols, rows;
  } kGrids[] = {{1, 1}, {1, 2}, {2, 1}, {2, 2}};

  GridPlan plan;
  for (const auto& g : kGrids) {
    if (sw <= g.cols * kTileEdge && sh <= g.rows * kTileEdge) {
      plan.grid_cols = g.cols;
      plan.grid_rows = g.rows;
      break;
    }
  }
  plan.scaled_width = sw;
  plan.scaled_height = sh;
  plan.include_thumbnail = plan.grid_cols * plan.grid_rows > 1;
  return plan;
}

TileSequence tile_image(const RasterImage& image) {
  if (image.empty()) throw ImageError("tile_image: empty image");
  TileSequence seq;
  seq.plan = plan_grid(image.width, image.height);

  RasterImage scaled = (image.width == seq.plan.scaled_width && image.height == seq.plan.scaled_height)
                           ? image
                           : resize_area(image, seq.plan.scaled_width, seq.plan.scaled_height);

  // Pad to grid extent, black, anchored top-left.
  RasterImage padded(seq.plan.padded_width(), seq.plan.padded_height());
  for (int y = 0; y < scaled.height; ++y) {
    std::copy_n(scaled.at(0, y), static_cast<std::size_t>(scaled.width) * 3, padded.at(0, y));
  }

  if (seq.plan.include_thumbnail) {
    seq.thumbnail = resize_area(scaled, kTileEdge, kTileEdge);
  }
  for (int r = 0; r < seq.plan.grid_rows; ++r) {
    for (int c = 0; c < seq.plan.grid_cols; ++c) {
      RasterImage tile(kTileEdge, kTileEdge);
      for (int y = 0; y < kTileEdge; ++y) {
        std::copy_n(padded.at(c * kTileEdge, r * kTileEdge + y),
                    static_cast<std::size_t>(kTileEdge) * 3, tile.at(0, y));
      }
      seq.tiles.push_back(std::move(tile));
    }
  }
  seq.token_count = kTokensPerTile * seq.plan.tile_count();
  return seq;
}

int token_count(int width, int height) {
  return kTokensPerTile * plan_grid(width, height).tile_count();
}

}  // namespace slideseek

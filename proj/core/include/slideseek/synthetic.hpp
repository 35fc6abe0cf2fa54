#pragma once

#include "slideseek/slide.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace slideseek {

struct Box {
  std::int64_t x0 = 0;
  std::int64_t y0 = 0;
  std::int64_t x1 = 0;
  std::int64_t y1 = 0;
  std::int64_t area() const { return (x1 - x0) * (y1 - y0); }
  bool operator==(const Box&) const = default;
};

std::int64_t box_intersection_area(const Box& a, const Box& b);

struct LesionFocus {
  Box box;
  std::string label;
};

struct BackgroundTexture {
  // Low-frequency sinusoid layered on the tissue tint.
  double wave_period = 512.0;
  double wave_amplitude = 10.0;
  // Edge transition width in base pixels; 0 gives hard edges (detection
  // fixtures), a few hundred gives fields smooth enough for resampling
  // oracles at every probe alignment.
  double edge_softness = 0.0;
  // Per-pixel hash noise amplitude (intensity levels).
  double noise_amplitude = 0.0;
};

struct SyntheticSlideSpec {
  std::string slide_id = "synthetic";
  std::int64_t width = 0;
  std::int64_t height = 0;
  double base_magnification = 20.0;
  int tile_edge = 512;
  std::vector<int> downsamples = {1, 4, 16};
  BackgroundTexture texture;
  std::vector<Box> tissue_blobs;
  std::vector<LesionFocus> lesion_foci;
  std::uint64_t rng_seed = 0;
};

/// Ground-truth sidecar written next to the tiles (truth.json).
struct SlideTruth {
  std::vector<Box> tissue_blobs;
  std::vector<LesionFocus> lesion_foci;
};

/// Writes the slide directory (manifest + level tiles + truth.json) and
/// reopens it. Identical spec => byte-identical directory contents.
PyramidSlide generate_synthetic(const SyntheticSlideSpec& spec, const std::filesystem::path& out);

std::optional<SlideTruth> load_truth(const std::filesystem::path& slide_dir);

/// Deterministic randomized spec for property and acceptance runs: one to
/// max_blobs hard-edged tissue blobs, zero to max_foci lesion foci (all
/// sharing one slide-level label) sized so a 20x screening sweep cannot miss
/// them, and blob edges kept away from the 20x tile grid.
SyntheticSlideSpec make_random_slide_spec(std::uint64_t seed, std::int64_t width,
                                          std::int64_t height, int min_foci, int max_foci);

SyntheticSlideSpec parse_slide_spec_json(const std::filesystem::path& spec_file);

}  // namespace slideseek

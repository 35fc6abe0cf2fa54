#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "slideseek/slide.hpp"
#include "slideseek/synthetic.hpp"

#include <fstream>
#include <random>

using namespace slideseek;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  return dir;
}

// Shared fixture: two hard-edged tissue blobs, one lesion, tall enough for
// the documented 1000..2000 x 3000..4000 read.
SyntheticSlideSpec fixture_spec() {
  SyntheticSlideSpec spec;
  spec.slide_id = "fixture";
  spec.width = 2048;
  spec.height = 4608;
  spec.texture.edge_softness = 0.0;
  spec.texture.noise_amplitude = 3.0;
  spec.tissue_blobs = {{256, 512, 1792, 2304}, {256, 2816, 1792, 4352}};
  spec.lesion_foci = {{{640, 2944, 1664, 3968}, "adenocarcinoma"}};
  spec.rng_seed = 21;
  return spec;
}

const PyramidSlide& fixture_slide() {
  static PyramidSlide slide = generate_synthetic(fixture_spec(), temp_dir("slideseek_fixture"));
  return slide;
}

// Oracle crop straight from the level-0 tile files, bypassing read_region.
RasterImage crop_from_tiles(const PyramidSlide& slide, std::int64_t x0, std::int64_t y0,
                            std::int64_t w, std::int64_t h) {
  RasterImage out(static_cast<int>(w), static_cast<int>(h));
  const int te = slide.tile_edge;
  for (std::int64_t ty = y0 / te; ty * te < y0 + h; ++ty) {
    for (std::int64_t tx = x0 / te; tx * te < x0 + w; ++tx) {
      RasterImage tile = load_png(slide.root / "level_0" /
                                  ("tile_" + std::to_string(tx) + "_" + std::to_string(ty) +
                                   ".png"));
      for (int py = 0; py < tile.height; ++py) {
        std::int64_t gy = ty * te + py;
        if (gy < y0 || gy >= y0 + h) continue;
        for (int px = 0; px < tile.width; ++px) {
          std::int64_t gx = tx * te + px;
          if (gx < x0 || gx >= x0 + w) continue;
          for (int c = 0; c < 3; ++c) {
            out.at(static_cast<int>(gx - x0), static_cast<int>(gy - y0))[c] = tile.at(px, py)[c];
          }
        }
      }
    }
  }
  return out;
}

}  // namespace

TEST_CASE("generation is deterministic: same spec, byte-identical directories") {
  fs::path a = temp_dir("slideseek_det_a");
  fs::path b = temp_dir("slideseek_det_b");
  SyntheticSlideSpec spec = make_random_slide_spec(17, 1024, 1024, 0, 2);
  generate_synthetic(spec, a);
  generate_synthetic(spec, b);
  int files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    ++files;
    fs::path rel = fs::relative(entry.path(), a);
    std::ifstream fa(entry.path(), std::ios::binary), fb(b / rel, std::ios::binary);
    REQUIRE(fb.good());
    std::string sa((std::istreambuf_iterator<char>(fa)), {});
    std::string sb((std::istreambuf_iterator<char>(fb)), {});
    CHECK(sa == sb);
  }
  CHECK(files > 4);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("open_slide validates the manifest") {
  fs::path dir = temp_dir("slideseek_badmanifest");
  fs::create_directories(dir);
  CHECK_THROWS_WITH_AS(open_slide(dir), doctest::Contains("manifest"), SlideError);

  auto write_manifest = [&](const std::string& levels) {
    std::ofstream m(dir / "manifest.json");
    m << R"({"slide_id":"x","base_width":512,"base_height":512,"base_magnification":20,)"
      << R"("mpp":null,"tile_edge":512,"levels":)" << levels << "}";
  };
  write_manifest(R"([{"downsample":4,"cols":1,"rows":1},{"downsample":1,"cols":1,"rows":1}])");
  CHECK_THROWS_AS(open_slide(dir), SlideError);  // non-monotonic downsamples

  write_manifest(R"([{"downsample":1,"cols":7,"rows":1}])");
  CHECK_THROWS_AS(open_slide(dir), SlideError);  // inconsistent geometry
  fs::remove_all(dir);
}

TEST_CASE("documented read: 1000..2000 x 3000..4000 at base power is an exact crop") {
  const PyramidSlide& slide = fixture_slide();
  RegionSpec region{1000, 3000, 2000, 4000, slide.base_magnification};
  RasterImage out = read_region(slide, region, 4096);
  REQUIRE(out.width == 1000);
  REQUIRE(out.height == 1000);
  CHECK(out == crop_from_tiles(slide, 1000, 3000, 1000, 1000));
}

TEST_CASE("read_region output extent follows round(extent * mag / base) with a max-edge clamp") {
  const PyramidSlide& slide = fixture_slide();
  RasterImage half = read_region(slide, {0, 0, 1000, 500, 10.0}, 4096);
  CHECK(half.width == 500);
  CHECK(half.height == 250);

  RasterImage clamped = read_region(slide, {0, 0, 2000, 2000, 20.0}, 256);
  CHECK(std::max(clamped.width, clamped.height) == 256);

  RasterImage coarse = read_region(slide, {0, 0, 2048, 4608, 1.25}, 896);
  CHECK(coarse.width == 128);   // 2048 * 1.25 / 20
  CHECK(coarse.height == 288);  // 4608 * 1.25 / 20
}

TEST_CASE("downsampled levels agree with a base-level box-average oracle") {
  const PyramidSlide& slide = fixture_slide();
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<std::int64_t> px(0, slide.base_width - 256),
      py(0, slide.base_height - 256);
  for (int trial = 0; trial < 20; ++trial) {
    std::int64_t x = (px(rng) / 4) * 4, y = (py(rng) / 4) * 4;
    // 5x on a 20x slide reads the downsample-4 level; the oracle averages the
    // corresponding base pixels directly.
    RasterImage from_level = read_region(slide, {x, y, x + 256, y + 256, 5.0}, 896);
    RasterImage base = crop_from_tiles(slide, x, y, 256, 256);
    RasterImage oracle = resample_area(base, 0, 0, 256, 256, 64, 64);
    REQUIRE(from_level.width == 64);
    for (std::size_t i = 0; i < oracle.rgb.size(); ++i) {
      CHECK(std::abs(static_cast<int>(from_level.rgb[i]) - static_cast<int>(oracle.rgb[i])) <= 2);
    }
  }
}

TEST_CASE("read_region rejects disallowed magnifications and out-of-bounds regions") {
  const PyramidSlide& slide = fixture_slide();
  CHECK_THROWS_AS(read_region(slide, {0, 0, 100, 100, 7.0}, 896), SlideError);
  CHECK_THROWS_AS(read_region(slide, {0, 0, 100, 100, 40.0}, 896), SlideError);  // above base
  CHECK_THROWS_AS(read_region(slide, {-10, 0, 100, 100, 20.0}, 896), SlideError);
  CHECK_THROWS_AS(read_region(slide, {0, 0, 5000, 100, 20.0}, 896), SlideError);
  CHECK_THROWS_AS(read_region(slide, {100, 100, 100, 200, 20.0}, 896), SlideError);  // empty
}

TEST_CASE("detect_tissue recovers the generated blobs within raster tolerance") {
  const PyramidSlide& slide = fixture_slide();
  std::vector<TissueBox> boxes = detect_tissue(slide);
  SyntheticSlideSpec spec = fixture_spec();
  REQUIRE(boxes.size() == spec.tissue_blobs.size());
  // The overview is the downsample-16 level; box edges quantize to it.
  const std::int64_t tol = 2 * 16;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    CHECK(boxes[i].index == static_cast<int>(i));
    CHECK(std::abs(boxes[i].x0 - spec.tissue_blobs[i].x0) <= tol);
    CHECK(std::abs(boxes[i].y0 - spec.tissue_blobs[i].y0) <= tol);
    CHECK(std::abs(boxes[i].x1 - spec.tissue_blobs[i].x1) <= tol);
    CHECK(std::abs(boxes[i].y1 - spec.tissue_blobs[i].y1) <= tol);
  }
  // Row-major ordering: first box starts higher.
  CHECK(boxes[0].y0 < boxes[1].y0);
}

TEST_CASE("nearby fragments merge into one detection box") {
  fs::path dir = temp_dir("slideseek_merge");
  SyntheticSlideSpec spec;
  spec.slide_id = "merge";
  spec.width = 2048;
  spec.height = 2048;
  // Gap of 16 base px = 1 overview px on the ds-16 level, well under the
  // 1% merge distance (~1.3 px of a 128-px thumb edge).
  spec.tissue_blobs = {{256, 256, 1024, 1024}, {1040, 256, 1792, 1024}};
  spec.rng_seed = 3;
  PyramidSlide slide = generate_synthetic(spec, dir);
  CHECK(detect_tissue(slide).size() == 1);
  fs::remove_all(dir);
}

TEST_CASE("thumbnail rendering is stable (golden digest) and outlines regions") {
  const PyramidSlide& slide = fixture_slide();
  RasterImage plain = render_thumbnail(slide, {}, 256);
  CHECK(std::max(plain.width, plain.height) == 256);
  // Frozen after the first verified render; any change to geometry, palette,
  // or resampling shows up here.
  CHECK(pixel_digest(plain) == 11844277030615843293ULL);

  std::vector<RegionSpec> visited{{100, 100, 900, 900, 20.0}};
  RasterImage marked = render_thumbnail(slide, visited, 256);
  CHECK(pixel_digest(marked) != pixel_digest(plain));
}

TEST_CASE("truth sidecar loads and lesions sit inside tissue") {
  const PyramidSlide& slide = fixture_slide();
  auto truth = load_truth(slide.root);
  REQUIRE(truth.has_value());
  REQUIRE(truth->lesion_foci.size() == 1);
  CHECK(truth->lesion_foci[0].label == "adenocarcinoma");
  CHECK(box_intersection_area(truth->lesion_foci[0].box, truth->tissue_blobs[1]) ==
        truth->lesion_foci[0].box.area());
}

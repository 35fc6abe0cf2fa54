#include "slideseek/anyres.hpp"
#include "slideseek/stats.hpp"
#include "slideseek/synthetic.hpp"

#include <benchmark/benchmark.h>

#include <cstdlib>
#include <filesystem>
#include <random>

namespace {

using namespace slideseek;

const PyramidSlide& bench_slide() {
  static PyramidSlide slide = [] {
    std::filesystem::path dir =
        std::filesystem::temp_directory_path() / "slideseek_bench_slide";
    SyntheticSlideSpec spec = make_random_slide_spec(7, 2048, 2048, 1, 2);
    return generate_synthetic(spec, dir);
  }();
  return slide;
}

void BM_ReadRegionScreening(benchmark::State& state) {
  const PyramidSlide& slide = bench_slide();
  RegionSpec region{512, 512, 512 + 896, 512 + 896, 20.0};
  for (auto _ : state) {
    benchmark::DoNotOptimize(read_region(slide, region, 896));
  }
}
BENCHMARK(BM_ReadRegionScreening);

void BM_ReadRegionCoarse(benchmark::State& state) {
  const PyramidSlide& slide = bench_slide();
  RegionSpec region{0, 0, 2048, 2048, 1.25};
  for (auto _ : state) {
    benchmark::DoNotOptimize(read_region(slide, region, 896));
  }
}
BENCHMARK(BM_ReadRegionCoarse);

void BM_DetectTissue(benchmark::State& state) {
  const PyramidSlide& slide = bench_slide();
  for (auto _ : state) {
    benchmark::DoNotOptimize(detect_tissue(slide));
  }
}
BENCHMARK(BM_DetectTissue);

void BM_PlanGrid(benchmark::State& state) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::int64_t> dim(1, 1024);
  for (auto _ : state) {
    benchmark::DoNotOptimize(plan_grid(dim(rng), dim(rng)));
  }
}
BENCHMARK(BM_PlanGrid);

void BM_BootstrapCI(benchmark::State& state) {
  std::mt19937_64 rng(2);
  std::bernoulli_distribution coin(0.85);
  std::vector<double> scores(150);
  for (double& s : scores) s = coin(rng) ? 1.0 : 0.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(bootstrap_ci(scores, 1000, 42));
  }
}
BENCHMARK(BM_BootstrapCI);

}  // namespace

BENCHMARK_MAIN();

#pragma once

#include "slideseek/backend.hpp"

#include <filesystem>
#include <map>
#include <string>

namespace slideseek {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Run-wide knobs. Defaults mirror the documented schema; a flat key=value
/// file and CLI flags override them.
struct RunConfig {
  std::string backend = "mock";  // mock | http
  std::uint64_t seed = 0;
  int max_rounds = 8;
  int fan_out_cap = 6;
  int task_budget = 24;
  int max_view_edge = 896;
  double screening_magnification = 20.0;
  double coarse_magnification = 1.25;
  double overlap_threshold = 0.25;
  int parallelism = 0;  // 0: one worker per task in the round
  BackendConfig http;
};

RunConfig parse_config_file(const std::filesystem::path& path);
void apply_config_entry(RunConfig& config, const std::string& key, const std::string& value);

}  // namespace slideseek

#include "slideseek/config.hpp"

#include <fstream>

namespace slideseek {

void apply_config_entry(RunConfig& config, const std::string& key, const std::string& value) {
  try {
    if (key == "backend") {
      if (value != "mock" && value != "http") throw ConfigError("backend must be mock or http");
      config.backend = value;
    } else if (key == "seed") config.seed = std::stoull(value);
    else if (key == "max_rounds") config.max_rounds = std::stoi(value);
    else if (key == "fan_out_cap") config.fan_out_cap = std::stoi(value);
    else if (key == "task_budget") config.task_budget = std::stoi(value);
    else if (key == "max_view_edge") config.max_view_edge = std::stoi(value);
    else if (key == "screening_magnification") config.screening_magnification = std::stod(value);
    else if (key == "coarse_magnification") config.coarse_magnification = std::stod(value);
    else if (key == "overlap_threshold") config.overlap_threshold = std::stod(value);
    else if (key == "parallelism") config.parallelism = std::stoi(value);
    else if (key == "endpoint") config.http.endpoint = value;
    else if (key == "model") config.http.model = value;
    else if (key == "timeout_s") config.http.timeout_s = std::stod(value);
    else if (key == "max_retries") config.http.max_retries = std::stoi(value);
    else if (key == "temperature") config.http.temperature = std::stod(value);
    else if (key == "max_concurrent") config.http.max_concurrent = std::stoi(value);
    else throw ConfigError("unknown config key: " + key);
  } catch (const std::invalid_argument&) {
    throw ConfigError("bad value for " + key + ": " + value);
  } catch (const std::out_of_range&) {
    throw ConfigError("value out of range for " + key + ": " + value);
  }
}

RunConfig parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config file not found: " + path.string());
  RunConfig config;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto strip = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t\r"));
      std::size_t last = s.find_last_not_of(" \t\r");
      s.erase(last == std::string::npos ? 0 : last + 1);
      return s;
    };
    line = strip(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    }
    apply_config_entry(config, strip(line.substr(0, eq)), strip(line.substr(eq + 1)));
  }
  config.http.seed = config.seed;
  return config;
}

}  // namespace slideseek

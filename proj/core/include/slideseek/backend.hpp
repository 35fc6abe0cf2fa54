#pragma once

#include "slideseek/protocol.hpp"
#include "slideseek/trace.hpp"

#include <span>
#include <string>
#include <vector>

namespace slideseek {

struct BackendError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct BackendConfig {
  std::string endpoint;           // e.g. http://host:port/v1/chat/completions
  std::string model = "pathllm";
  std::string api_key_env = "PATHLLM_API_KEY";
  double timeout_s = 30.0;
  int max_retries = 3;
  double temperature = 0.0;
  std::uint64_t seed = 0;  // mock backends only
  int max_concurrent = 4;
};

struct Differential {
  std::string primary;
  std::vector<std::string> differentials;  // exactly 2
};

/// Produces morphological captions and the final differential. The region is
/// passed alongside the pixels so backends can ground captions spatially (the
/// deterministic mock keys off it).
class CaptionerBackend {
 public:
  virtual ~CaptionerBackend() = default;
  virtual std::string caption_region(const RasterImage& image, const RegionSpec& region,
                                     const std::string& prompt) = 0;
  virtual Differential differential_diagnosis(std::span<const ROIRecord> rois,
                                              std::span<const RasterImage> images,
                                              const std::string& context) = 0;
};

/// Produces structured agent decisions from a prompt.
class DecisionBackend {
 public:
  virtual ~DecisionBackend() = default;
  virtual nlohmann::json decide(const std::string& prompt) = 0;
};

/// Minimal schema: required field names plus expected JSON type names
/// ("string", "boolean", "number", "integer", "array", "object").
struct DecisionSchema {
  std::vector<std::pair<std::string, std::string>> required;
};

std::vector<std::string> check_schema(const nlohmann::json& value, const DecisionSchema& schema);

/// Runs the backend, validates against the schema, and reprompts once with
/// the violation list appended on failure. A second violation is an error.
/// Extra fields are tolerated. Repair attempts are visible in the trace.
nlohmann::json decide_validated(DecisionBackend& backend, const std::string& prompt,
                                const DecisionSchema& schema, std::vector<PendingEvent>* log,
                                const std::string& actor, EventKind log_kind);

/// Embeds a machine-readable context block in a prompt, and extracts it
/// again. Scripted policies act on this block; HTTP backends just see prose
/// with an embedded JSON fence.
std::string embed_context_block(const std::string& prose, const nlohmann::json& context);
nlohmann::json extract_context_block(const std::string& prompt);

}  // namespace slideseek

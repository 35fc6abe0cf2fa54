#pragma once

#include "slideseek/backend.hpp"
#include "slideseek/config.hpp"
#include "slideseek/synthetic.hpp"

#include <map>

namespace slideseek {

/// Deterministic captioner keyed to the synthetic ground truth: regions whose
/// lesion overlap reaches the threshold (fraction of the viewed area) are
/// captioned with the lesion label; tissue without lesion content is
/// unremarkable; glass is reported as featureless.
class MockCaptioner : public CaptionerBackend {
 public:
  MockCaptioner(SlideTruth truth, double overlap_threshold);

  std::string caption_region(const RasterImage& image, const RegionSpec& region,
                             const std::string& prompt) override;
  Differential differential_diagnosis(std::span<const ROIRecord> rois,
                                      std::span<const RasterImage> images,
                                      const std::string& context) override;

  /// Distractor pair per primary label; unknown labels fall back to a
  /// generic benign pair.
  static const std::map<std::string, std::pair<std::string, std::string>>& label_map();

 private:
  SlideTruth truth_;
  double overlap_threshold_;
};

/// Scripted supervisor + explorer decision policy: coarse architectural pass,
/// 20x screening sweep, one follow-up per flagged task, then finish. Pure
/// function of the embedded context block and the seed.
class ScriptedPolicy : public DecisionBackend {
 public:
  explicit ScriptedPolicy(const RunConfig& config) : config_(config) {}

  nlohmann::json decide(const std::string& prompt) override;

 private:
  nlohmann::json decide_init(const nlohmann::json& ctx);
  nlohmann::json decide_plan(const nlohmann::json& ctx);
  nlohmann::json decide_review(const nlohmann::json& ctx);
  nlohmann::json decide_explore(const nlohmann::json& ctx);
  nlohmann::json decide_finalize(const nlohmann::json& ctx);

  RunConfig config_;
};

/// Extracts the lesion label a caption mentions, if any known label occurs.
std::optional<std::string> label_in_caption(const std::string& caption);

}  // namespace slideseek

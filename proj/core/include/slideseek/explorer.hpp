#pragma once

#include "slideseek/backend.hpp"
#include "slideseek/config.hpp"

#include <utility>
#include <variant>
#include <vector>

namespace slideseek {

struct ExplorerState {
  TaskSpec task;
  std::vector<RegionSpec> visited;
  std::vector<std::pair<RegionSpec, std::string>> captions;
  int views_remaining = 0;
  bool done = false;
};

struct ViewAction {
  RegionSpec region;
  std::string rationale;
};
struct SubmitAction {
  ExplorerReport report;
};
using NavigationAction = std::variant<ViewAction, SubmitAction>;

/// One explorer decision. A View is executed immediately (read, caption,
/// thumbnail refresh, trace log); a Submit composes the report. Invalid
/// coordinates from the policy get one repair reprompt, then a forced Submit
/// with partial findings.
NavigationAction step(ExplorerState& state, const PyramidSlide& slide, CaptionerBackend& captioner,
                      DecisionBackend& policy, const RunConfig& config,
                      std::vector<PendingEvent>& log, int round, int roi_id_base);

/// Algorithm-1 inner loop: steps until Submit or budget exhaustion. Events
/// (views, captions, the report) accumulate into `log` in causal order.
ExplorerReport run_task(const TaskSpec& task, const PyramidSlide& slide,
                        CaptionerBackend& captioner, DecisionBackend& policy,
                        const RunConfig& config, std::vector<PendingEvent>& log, int round,
                        int roi_id_base);

/// Captions are flagged when they mention any of these (case-insensitive).
extern const std::vector<std::string> kLesionKeywords;
bool caption_flags_lesion(const std::string& caption);

}  // namespace slideseek

#pragma once

#include "slideseek/backend.hpp"
#include "slideseek/config.hpp"
#include "slideseek/explorer.hpp"

#include <array>
#include <map>
#include <optional>

namespace slideseek {

/// The Algorithm-1 outer loop: hypotheses, plan, delegate, review, terminate,
/// collate, diagnose, report. Strictly sequential; each round's tasks run in
/// parallel behind a barrier.
class Supervisor {
 public:
  Supervisor(const PyramidSlide& slide, std::vector<TissueBox> boxes,
             std::string clinical_context, DecisionBackend& policy, CaptionerBackend& captioner,
             TraceWriter& trace, RunConfig config);

  /// Forms initial hypotheses and plan from dims, boxes, and the thumbnail.
  void init();

  /// One planning cycle: validated tasks, or std::nullopt when finished.
  /// Increments the round either way.
  std::optional<std::vector<TaskSpec>> plan_round();

  /// Ingests one round's reports and updates hypotheses.
  void review_reports(const std::vector<ExplorerReport>& reports);

  /// Deterministic selection of <= 10 flagged ROIs (relevance desc, earlier
  /// round first, then lower roi_id). Requires finished.
  std::vector<ROIRecord> collate_rois() const;

  DiagnosisReport finalize(const std::vector<ROIRecord>& rois);

  /// Full loop: init, plan/execute/review until finished or max_rounds, then
  /// collate + finalize. Backend failures abort with a trace marker.
  DiagnosisReport run();

  const SupervisorState& state() const { return state_; }
  const std::string& init_prompt() const { return init_prompt_; }

 private:
  std::vector<ExplorerReport> execute_round(const std::vector<TaskSpec>& tasks);
  nlohmann::json followup_candidates() const;

  const PyramidSlide& slide_;
  std::vector<TissueBox> boxes_;
  std::string clinical_context_;
  DecisionBackend& policy_;
  CaptionerBackend& captioner_;
  TraceWriter& trace_;
  RunConfig config_;
  SupervisorState state_;
  std::map<std::string, TaskSpec> issued_tasks_;
  // Follow-up task rectangles (x0, y0, x1, y1) already issued.
  std::vector<std::array<std::int64_t, 4>> followed_up_;
  std::string init_prompt_;
  bool initialized_ = false;
};

}  // namespace slideseek

#include "slideseek/explorer.hpp"

#include "slideseek/anyres.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace slideseek {

using nlohmann::json;

const std::vector<std::string> kLesionKeywords = {"carcinoma", "adenocarcinoma", "lymphoma",
                                                  "malignant"};

bool caption_flags_lesion(const std::string& caption) {
  std::string lower = caption;
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (const std::string& kw : kLesionKeywords) {
    if (lower.find(kw) != std::string::npos) return true;
  }
  return false;
}

namespace {

json region_context(const RegionSpec& r) { return to_json(r); }

std::string explorer_actor(const TaskSpec& task) { return "explorer:" + task.task_id; }

json build_decision_context(const ExplorerState& state, const PyramidSlide& slide,
                            const RunConfig& config, std::uint64_t thumb_digest) {
  std::int64_t cell_base = std::llround(config.max_view_edge * slide.base_magnification /
                                        state.task.region.magnification);
  json visited = json::array();
  for (const RegionSpec& r : state.visited) visited.push_back(region_context(r));
  json captions = json::array();
  for (const auto& [region, caption] : state.captions) {
    captions.push_back({{"region", region_context(region)},
                        {"caption", caption},
                        {"flagged", caption_flags_lesion(caption)}});
  }
  return json{{"phase", "explore"},
              {"task", to_json(state.task)},
              {"visited", std::move(visited)},
              {"captions", std::move(captions)},
              {"view_cell_base", cell_base},
              {"views_remaining", state.views_remaining},
              {"thumbnail_digest", thumb_digest}};
}

ExplorerReport compose_report(const ExplorerState& state, int round, int roi_id_base,
                              const std::string& findings) {
  ExplorerReport report;
  report.task_id = state.task.task_id;
  report.findings = findings;
  report.views_used = static_cast<int>(state.visited.size());
  for (std::size_t i = 0; i < state.captions.size(); ++i) {
    ROIRecord roi;
    roi.roi_id = roi_id_base + static_cast<int>(i);
    roi.region = state.captions[i].first;
    roi.caption = state.captions[i].second;
    roi.source_task = state.task.task_id;
    roi.flagged_relevant = caption_flags_lesion(roi.caption);
    roi.relevance = roi.flagged_relevant ? 1.0 : 0.0;
    roi.round = round;
    report.rois.push_back(std::move(roi));
  }
  return report;
}

std::string default_findings(const ExplorerState& state) {
  int flagged = 0;
  bool any_tissue = false;
  for (const auto& [region, caption] : state.captions) {
    if (caption_flags_lesion(caption)) ++flagged;
    if (caption.find("no tissue features") == std::string::npos) any_tissue = true;
  }
  if (!any_tissue) return "no tissue features in the assigned region";
  std::string s = "examined " + std::to_string(state.visited.size()) + " regions at " +
                  std::to_string(state.task.region.magnification) + "x; " +
                  std::to_string(flagged) + " flagged as diagnostically relevant";
  return s;
}

/// Executes a validated View: extract, caption, refresh the annotated
/// thumbnail, and log.
void perform_view(ExplorerState& state, const PyramidSlide& slide, CaptionerBackend& captioner,
                  const RunConfig& config, std::vector<PendingEvent>& log,
                  const RegionSpec& region, const std::string& rationale) {
  RasterImage image = read_region(slide, region, config.max_view_edge);
  std::uint64_t digest = pixel_digest(image);
  GridPlan plan = plan_grid(image.width, image.height);
  log.push_back({explorer_actor(state.task), EventKind::View,
                 json{{"task_id", state.task.task_id},
                      {"region", to_json(region)},
                      {"rationale", rationale},
                      {"max_edge", config.max_view_edge},
                      {"width", image.width},
                      {"height", image.height},
                      {"image_digest", digest}}});

  std::string prompt = embed_context_block(
      "Describe the key morphological features observed in this region.",
      json{{"region", to_json(region)}, {"slide_id", slide.slide_id}});
  std::string caption = captioner.caption_region(image, region, prompt);
  if (caption.empty()) throw BackendError("captioner returned an empty caption");
  log.push_back({explorer_actor(state.task), EventKind::Caption,
                 json{{"task_id", state.task.task_id},
                      {"region", to_json(region)},
                      {"caption", caption},
                      {"token_count", kTokensPerTile * plan.tile_count()},
                      {"grid", {{"cols", plan.grid_cols}, {"rows", plan.grid_rows}}},
                      {"image_digest", digest}}});

  state.visited.push_back(region);
  state.captions.emplace_back(region, caption);
  --state.views_remaining;
}

bool view_inside_task(const ExplorerState& state, const PyramidSlide& slide,
                      const RegionSpec& region) {
  if (!validate_region(slide, region).empty()) return false;
  const RegionSpec& t = state.task.region;
  return region.x0 >= t.x0 && region.y0 >= t.y0 && region.x1 <= t.x1 && region.y1 <= t.y1;
}

}  // namespace

NavigationAction step(ExplorerState& state, const PyramidSlide& slide, CaptionerBackend& captioner,
                      DecisionBackend& policy, const RunConfig& config,
                      std::vector<PendingEvent>& log, int round, int roi_id_base) {
  if (state.done) throw ProtocolError("step on a completed explorer");
  if (state.views_remaining <= 0) {
    state.done = true;
    SubmitAction submit{compose_report(state, round, roi_id_base, default_findings(state))};
    return submit;
  }

  RasterImage thumb = render_thumbnail(slide, state.visited, 256);
  json context = build_decision_context(state, slide, config, pixel_digest(thumb));
  std::string prompt = embed_context_block(
      "You are exploring the assigned slide region. Choose the next view or submit your report.",
      context);
  DecisionSchema schema{{{"action", "string"}}};
  json decision =
      decide_validated(policy, prompt, schema, &log, explorer_actor(state.task), EventKind::View);

  std::string action = decision.at("action").get<std::string>();
  if (action == "submit") {
    state.done = true;
    std::string findings = decision.value("findings", std::string());
    if (findings.empty()) findings = default_findings(state);
    return SubmitAction{compose_report(state, round, roi_id_base, findings)};
  }
  if (action != "view") throw BackendError("unknown explorer action: " + action);

  RegionSpec region = region_from_json(decision.at("region"));
  std::string rationale = decision.value("rationale", std::string("navigate"));
  if (!view_inside_task(state, slide, region)) {
    // One repair attempt, then a forced submit with partial findings.
    json repaired = decide_validated(
        policy,
        embed_context_block("Your proposed view was outside the task region or slide bounds. "
                            "Choose valid coordinates or submit.",
                            context),
        schema, &log, explorer_actor(state.task), EventKind::View);
    bool ok = repaired.at("action").get<std::string>() == "view" &&
              repaired.contains("region") &&
              view_inside_task(state, slide, region_from_json(repaired.at("region")));
    if (!ok) {
      state.done = true;
      return SubmitAction{compose_report(state, round, roi_id_base,
                                         default_findings(state) + " (partial: invalid navigation)")};
    }
    region = region_from_json(repaired.at("region"));
    rationale = repaired.value("rationale", rationale);
  }

  perform_view(state, slide, captioner, config, log, region, rationale);
  return ViewAction{region, rationale};
}

ExplorerReport run_task(const TaskSpec& task, const PyramidSlide& slide,
                        CaptionerBackend& captioner, DecisionBackend& policy,
                        const RunConfig& config, std::vector<PendingEvent>& log, int round,
                        int roi_id_base) {
  auto violations = validate_task(task, slide);
  if (!violations.empty()) throw ProtocolError("invalid task " + task.task_id + ": " + violations.front());

  ExplorerState state;
  state.task = task;
  state.views_remaining = task.budget;
  while (true) {
    NavigationAction action = step(state, slide, captioner, policy, config, log, round, roi_id_base);
    if (auto* submit = std::get_if<SubmitAction>(&action)) {
      log.push_back({explorer_actor(task), EventKind::Report,
                     json{{"report", to_json(submit->report)}}});
      return submit->report;
    }
  }
}

}  // namespace slideseek

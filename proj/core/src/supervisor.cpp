#include "slideseek/supervisor.hpp"

#include "slideseek/anyres.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <regex>
#include <set>

namespace slideseek {

using nlohmann::json;

namespace {

json box_to_context(const TissueBox& b) {
  return json{{"index", b.index}, {"x0", b.x0}, {"y0", b.y0}, {"x1", b.x1}, {"y1", b.y1}};
}

}  // namespace

Supervisor::Supervisor(const PyramidSlide& slide, std::vector<TissueBox> boxes,
                       std::string clinical_context, DecisionBackend& policy,
                       CaptionerBackend& captioner, TraceWriter& trace, RunConfig config)
    : slide_(slide),
      boxes_(std::move(boxes)),
      clinical_context_(std::move(clinical_context)),
      policy_(policy),
      captioner_(captioner),
      trace_(trace),
      config_(std::move(config)) {}

void Supervisor::init() {
  RasterImage thumb = render_thumbnail(slide_, {}, 512);

  std::string prose = "You are the supervising pathologist agent for slide '" + slide_.slide_id +
                      "'.\nSlide dimensions: " + std::to_string(slide_.base_width) + " x " +
                      std::to_string(slide_.base_height) + " pixels at " +
                      std::to_string(slide_.base_magnification) + "x.\nTissue bounding boxes:\n";
  for (const TissueBox& b : boxes_) {
    prose += "  region #" + std::to_string(b.index) + ": top-left (" + std::to_string(b.x0) +
             ", " + std::to_string(b.y0) + "), bottom-right (" + std::to_string(b.x1) + ", " +
             std::to_string(b.y1) + ")\n";
  }
  prose += "Clinical context: " + clinical_context_ + "\n";
  prose += "A low-resolution thumbnail overview is attached (digest " +
           std::to_string(pixel_digest(thumb)) + ").\n";
  prose += "Formulate initial hypotheses and an exploration plan.";

  json boxes_ctx = json::array();
  for (const TissueBox& b : boxes_) boxes_ctx.push_back(box_to_context(b));
  json ctx = {{"phase", "init"},
              {"slide_id", slide_.slide_id},
              {"base_width", slide_.base_width},
              {"base_height", slide_.base_height},
              {"base_magnification", slide_.base_magnification},
              {"boxes", boxes_ctx},
              {"clinical_context", clinical_context_},
              {"thumbnail_digest", pixel_digest(thumb)}};
  init_prompt_ = embed_context_block(prose, ctx);

  DecisionSchema schema{{{"hypotheses", "array"}, {"plan", "string"}}};
  std::vector<PendingEvent> log;
  json decision = decide_validated(policy_, init_prompt_, schema, &log, "supervisor",
                                   EventKind::Plan);
  trace_.append_all(log);

  state_ = SupervisorState{};
  state_.hypotheses = decision.at("hypotheses").get<std::vector<std::string>>();
  state_.plan = decision.at("plan").get<std::string>();
  state_.current_step = decision.value("current_step", std::string());
  if (state_.hypotheses.empty()) throw BackendError("init produced no hypotheses");
  if (state_.plan.empty()) throw BackendError("init produced an empty plan");
  initialized_ = true;
}

json Supervisor::followup_candidates() const {
  // Group flagged ROIs by source task; a source whose flagged region already
  // received a confirmation task is settled and yields no further candidates.
  std::map<std::string, std::vector<const ROIRecord*>> by_source;
  std::set<std::string> settled;
  for (const ExplorerReport& r : state_.received_reports) {
    for (const ROIRecord& roi : r.rois) {
      if (!roi.flagged_relevant) continue;
      std::array<std::int64_t, 4> b{roi.region.x0, roi.region.y0, roi.region.x1, roi.region.y1};
      bool already = std::any_of(followed_up_.begin(), followed_up_.end(),
                                 [&](const auto& f) { return f == b; });
      if (already) settled.insert(roi.source_task);
      by_source[roi.source_task].push_back(&roi);
    }
  }
  json candidates = json::array();
  std::vector<const ROIRecord*> flagged;
  for (const auto& [src, rois] : by_source) {
    if (settled.count(src)) continue;
    flagged.insert(flagged.end(), rois.begin(), rois.end());
  }
  std::sort(flagged.begin(), flagged.end(), [](const ROIRecord* a, const ROIRecord* b) {
    return std::tie(b->relevance, a->roi_id) < std::tie(a->relevance, b->roi_id);
  });
  for (const ROIRecord* roi : flagged) {
    int box_index = -1;
    auto it = issued_tasks_.find(roi->source_task);
    if (it != issued_tasks_.end()) box_index = it->second.tissue_box_index;
    candidates.push_back({{"roi_id", roi->roi_id},
                          {"region", to_json(roi->region)},
                          {"source_task", roi->source_task},
                          {"relevance", roi->relevance},
                          {"tissue_box_index", box_index}});
  }
  return candidates;
}

std::optional<std::vector<TaskSpec>> Supervisor::plan_round() {
  if (!initialized_) throw ProtocolError("plan_round before init");
  if (state_.finished) throw ProtocolError("plan_round after finished");
  const int cycle = state_.round;

  auto emit_plan = [&](const std::vector<TaskSpec>& tasks, bool finished,
                       const std::string& justification) {
    json tasks_json = json::array();
    for (const TaskSpec& t : tasks) tasks_json.push_back(to_json(t));
    json payload = {{"round", cycle},
                    {"hypotheses", state_.hypotheses},
                    {"plan", state_.plan},
                    {"current_step", state_.current_step},
                    {"tasks", tasks_json},
                    {"finished", finished},
                    {"justification", justification}};
    if (cycle == 0) {
      payload["config"] = {{"backend", config_.backend},
                          {"seed", config_.seed},
                          {"max_rounds", config_.max_rounds},
                          {"max_view_edge", config_.max_view_edge}};
    }
    trace_.append("supervisor", EventKind::Plan, payload);
  };

  if (cycle >= config_.max_rounds) {
    state_.finished = true;
    state_.round = cycle + 1;
    emit_plan({}, true, "budget exhausted: round limit reached");
    return std::nullopt;
  }

  json boxes_ctx = json::array();
  for (const TissueBox& b : boxes_) boxes_ctx.push_back(box_to_context(b));
  json ctx = {{"phase", "plan"},
              {"round", cycle},
              {"boxes", boxes_ctx},
              {"hypotheses", state_.hypotheses},
              {"followup_candidates", followup_candidates()},
              {"fan_out_cap", config_.fan_out_cap}};
  std::string prompt = embed_context_block(
      "Create the next exploration step: either tasks for explorer agents or declare the "
      "analysis complete, with a justification.",
      ctx);
  DecisionSchema schema{{{"tasks", "array"}, {"finished", "boolean"}, {"justification", "string"}}};
  std::vector<PendingEvent> log;
  json decision = decide_validated(policy_, prompt, schema, &log, "supervisor", EventKind::Plan);
  trace_.append_all(log);

  if (decision.at("finished").get<bool>()) {
    state_.finished = true;
    state_.pending_tasks.clear();
    state_.round = cycle + 1;
    emit_plan({}, true, decision.at("justification").get<std::string>());
    return std::nullopt;
  }

  auto build_tasks = [&](const json& proposals) {
    std::vector<TaskSpec> tasks;
    std::vector<std::string> violations;
    int idx = 0;
    for (const auto& p : proposals) {
      if (static_cast<int>(tasks.size()) >= config_.fan_out_cap) break;
      TaskSpec t;
      t.task_id = "t" + std::to_string(cycle) + "-" + std::to_string(idx++);
      t.tissue_box_index = p.value("tissue_box_index", -1);
      t.region = region_from_json(p.at("region"));
      t.features_to_document = p.at("features_to_document").get<std::string>();
      t.context = "hypotheses: " + json(state_.hypotheses).dump();
      t.budget = p.at("budget").get<int>();
      auto v = validate_task(t, slide_);
      if (!v.empty()) {
        for (const std::string& msg : v) violations.push_back(t.task_id + ": " + msg);
        continue;
      }
      tasks.push_back(std::move(t));
    }
    return std::pair{tasks, violations};
  };

  auto [tasks, violations] = build_tasks(decision.at("tasks"));
  if (tasks.empty() && !violations.empty()) {
    // One repair attempt with the violation list, then a planning error.
    std::string repair = "Every proposed task was invalid:";
    for (const std::string& v : violations) repair += "\n- " + v;
    json repaired = decide_validated(policy_, embed_context_block(repair, ctx), schema, &log,
                                     "supervisor", EventKind::Plan);
    trace_.append_all(log);
    std::tie(tasks, violations) = build_tasks(repaired.at("tasks"));
    if (tasks.empty()) throw BackendError("planning failed: no valid tasks after repair");
  }
  if (tasks.empty()) throw BackendError("planning produced neither tasks nor completion");

  state_.pending_tasks = tasks;
  state_.round = cycle + 1;
  emit_plan(tasks, false, decision.at("justification").get<std::string>());
  for (const TaskSpec& t : tasks) {
    issued_tasks_[t.task_id] = t;
    if (t.features_to_document.find("confirm") != std::string::npos) {
      followed_up_.push_back({t.region.x0, t.region.y0, t.region.x1, t.region.y1});
    }
    trace_.append("supervisor", EventKind::TaskIssued, json{{"task", to_json(t)}});
  }
  return tasks;
}

void Supervisor::review_reports(const std::vector<ExplorerReport>& reports) {
  const int cycle = state_.round - 1;
  std::set<std::string> seen;
  for (const ExplorerReport& r : reports) {
    if (!seen.insert(r.task_id).second) {
      throw ProtocolError("duplicate report for task " + r.task_id);
    }
    bool pending = std::any_of(state_.pending_tasks.begin(), state_.pending_tasks.end(),
                               [&](const TaskSpec& t) { return t.task_id == r.task_id; });
    if (!pending) throw ProtocolError("report for unknown task " + r.task_id);
    auto it = issued_tasks_.find(r.task_id);
    if (it != issued_tasks_.end() && r.views_used > it->second.budget) {
      throw ProtocolError("report exceeds budget for task " + r.task_id);
    }
  }

  json reports_ctx = json::array();
  for (const ExplorerReport& r : reports) {
    int flagged = static_cast<int>(
        std::count_if(r.rois.begin(), r.rois.end(),
                      [](const ROIRecord& roi) { return roi.flagged_relevant; }));
    reports_ctx.push_back(
        {{"task_id", r.task_id}, {"flagged_count", flagged}, {"findings", r.findings}});
  }
  json ctx = {{"phase", "review"}, {"hypotheses", state_.hypotheses}, {"reports", reports_ctx}};
  std::string prompt = embed_context_block(
      "Review the explorer reports and update the working hypotheses, justifying each change.",
      ctx);
  DecisionSchema schema{
      {{"hypotheses", "array"}, {"justifications", "array"}, {"finished", "boolean"}}};
  std::vector<PendingEvent> log;
  json decision = decide_validated(policy_, prompt, schema, &log, "supervisor", EventKind::Review);
  trace_.append_all(log);

  for (const ExplorerReport& r : reports) {
    std::erase_if(state_.pending_tasks,
                  [&](const TaskSpec& t) { return t.task_id == r.task_id; });
    state_.received_reports.push_back(r);
  }
  state_.hypotheses = decision.at("hypotheses").get<std::vector<std::string>>();
  for (const auto& j : decision.at("justifications")) {
    state_.justifications.push_back(j.get<std::string>());
  }
  if (decision.at("finished").get<bool>() && state_.pending_tasks.empty()) {
    state_.finished = true;
  }

  trace_.append("supervisor", EventKind::Review,
                json{{"round", cycle},
                     {"hypotheses", state_.hypotheses},
                     {"justifications", decision.at("justifications")},
                     {"finished", state_.finished}});
}

std::vector<ROIRecord> Supervisor::collate_rois() const {
  if (!state_.finished) throw ProtocolError("collate_rois before finished");
  std::vector<ROIRecord> flagged;
  for (const ExplorerReport& r : state_.received_reports) {
    for (const ROIRecord& roi : r.rois) {
      if (roi.flagged_relevant) flagged.push_back(roi);
    }
  }
  std::sort(flagged.begin(), flagged.end(), [](const ROIRecord& a, const ROIRecord& b) {
    if (a.relevance != b.relevance) return a.relevance > b.relevance;
    return std::tie(a.round, a.roi_id) < std::tie(b.round, b.roi_id);
  });
  if (flagged.size() > 10) flagged.resize(10);
  return flagged;
}

DiagnosisReport Supervisor::finalize(const std::vector<ROIRecord>& rois) {
  DiagnosisReport report;
  if (rois.empty()) {
    report.primary_diagnosis = "non-diagnostic";
    report.differentials = {"insufficient sampling", "no diagnostic material identified"};
    report.confidence = Confidence::Low;
    report.narrative =
        "Insufficient sampling: no diagnostically relevant regions were identified during "
        "exploration.";
    trace_.append("supervisor", EventKind::Finalize, json{{"report", to_json(report)}});
    return report;
  }

  // One multi-image request: every cited ROI, AnyRes-planned.
  std::vector<RasterImage> images;
  json token_plan = json::array();
  int total_tokens = 0;
  for (const ROIRecord& roi : rois) {
    RasterImage img = read_region(slide_, roi.region, config_.max_view_edge);
    total_tokens += token_count(img.width, img.height);
    token_plan.push_back({{"roi_id", roi.roi_id}, {"tokens", token_count(img.width, img.height)}});
    images.push_back(std::move(img));
  }
  int newline_markers = static_cast<int>(images.size()) - 1;

  Differential d = captioner_.differential_diagnosis(rois, images, clinical_context_);
  if (d.differentials.size() != 2) {
    throw BackendError("malformed differential: expected primary plus exactly 2 alternatives");
  }
  trace_.append("supervisor", EventKind::Diagnose,
                json{{"request_images", images.size()},
                     {"token_plan", token_plan},
                     {"newline_markers", newline_markers},
                     {"total_tokens", total_tokens + newline_markers},
                     {"primary", d.primary},
                     {"differentials", d.differentials}});

  json rois_ctx = json::array();
  for (const ROIRecord& roi : rois) {
    rois_ctx.push_back({{"roi_id", roi.roi_id}, {"caption", roi.caption}});
  }
  json ctx = {{"phase", "finalize"},
              {"rois", rois_ctx},
              {"primary", d.primary},
              {"differentials", d.differentials}};
  std::string prompt = embed_context_block(
      "Draft the final report narrative, citing ROIs explicitly, and assess your confidence.",
      ctx);
  DecisionSchema schema{{{"confidence", "string"}, {"narrative", "string"}}};
  std::vector<PendingEvent> log;
  json decision =
      decide_validated(policy_, prompt, schema, &log, "supervisor", EventKind::Finalize);
  trace_.append_all(log);

  report.primary_diagnosis = d.primary;
  report.differentials = d.differentials;
  report.confidence = confidence_from_string(decision.at("confidence").get<std::string>());
  report.narrative = decision.at("narrative").get<std::string>();
  report.cited_rois = rois;

  // Every ROI the narrative cites must be in cited_rois.
  std::set<int> cited_ids;
  for (const ROIRecord& roi : rois) cited_ids.insert(roi.roi_id);
  std::regex cite_re("\\[ROI (\\d+)\\]");
  for (std::sregex_iterator it(report.narrative.begin(), report.narrative.end(), cite_re), end;
       it != end; ++it) {
    if (!cited_ids.count(std::stoi((*it)[1].str()))) {
      throw ProtocolError("narrative cites ROI " + (*it)[1].str() + " outside cited_rois");
    }
  }

  trace_.append("supervisor", EventKind::Finalize, json{{"report", to_json(report)}});
  return report;
}

std::vector<ExplorerReport> Supervisor::execute_round(const std::vector<TaskSpec>& tasks) {
  const int cycle = state_.round - 1;
  std::vector<std::vector<PendingEvent>> logs(tasks.size());
  std::vector<ExplorerReport> reports(tasks.size());
  std::vector<std::future<void>> futures;

  int workers = config_.parallelism > 0 ? config_.parallelism : static_cast<int>(tasks.size());
  workers = std::max(1, workers);
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next.fetch_add(1); i < tasks.size(); i = next.fetch_add(1)) {
      int roi_base = cycle * 100000 + static_cast<int>(i) * 1000;
      reports[i] = run_task(tasks[i], slide_, captioner_, policy_, config_, logs[i], cycle,
                            roi_base);
    }
  };
  for (int w = 0; w < std::min<int>(workers, static_cast<int>(tasks.size())); ++w) {
    futures.push_back(std::async(std::launch::async, worker));
  }
  for (auto& f : futures) f.get();  // barrier; propagates explorer failures

  // Deterministic flush order regardless of scheduling.
  for (const auto& log : logs) trace_.append_all(log);
  return reports;
}

DiagnosisReport Supervisor::run() {
  try {
    init();
    while (!state_.finished) {
      auto tasks = plan_round();
      if (!tasks) break;
      std::vector<ExplorerReport> reports = execute_round(*tasks);
      review_reports(reports);
    }
    std::vector<ROIRecord> rois = collate_rois();
    json rois_json = json::array();
    for (const ROIRecord& roi : rois) rois_json.push_back(to_json(roi));
    trace_.append("supervisor", EventKind::Collate, json{{"rois", rois_json}});
    return finalize(rois);
  } catch (const BackendError& e) {
    trace_.append("supervisor", EventKind::Finalize,
                  json{{"kind", "aborted"}, {"reason", e.what()}});
    throw;
  }
}

}  // namespace slideseek

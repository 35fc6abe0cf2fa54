#include "slideseek/protocol.hpp"

#include <algorithm>
#include <cctype>

namespace slideseek {

using nlohmann::json;
using nlohmann::ordered_json;

std::string to_string(Confidence c) { return c == Confidence::High ? "High" : "Low"; }

Confidence confidence_from_string(const std::string& s) {
  if (s == "High") return Confidence::High;
  if (s == "Low") return Confidence::Low;
  throw ProtocolError("unknown confidence label: " + s);
}

std::string to_string(EventKind k) {
  switch (k) {
    case EventKind::Plan: return "plan";
    case EventKind::TaskIssued: return "task_issued";
    case EventKind::View: return "view";
    case EventKind::Caption: return "caption";
    case EventKind::Report: return "report";
    case EventKind::Review: return "review";
    case EventKind::Collate: return "collate";
    case EventKind::Diagnose: return "diagnose";
    case EventKind::Finalize: return "finalize";
  }
  throw ProtocolError("unhandled event kind");
}

EventKind event_kind_from_string(const std::string& s) {
  static const std::pair<const char*, EventKind> kMap[] = {
      {"plan", EventKind::Plan},       {"task_issued", EventKind::TaskIssued},
      {"view", EventKind::View},       {"caption", EventKind::Caption},
      {"report", EventKind::Report},   {"review", EventKind::Review},
      {"collate", EventKind::Collate}, {"diagnose", EventKind::Diagnose},
      {"finalize", EventKind::Finalize}};
  for (const auto& [name, kind] : kMap) {
    if (s == name) return kind;
  }
  throw ProtocolError("unknown event kind: " + s);
}

namespace {

const json& require(const json& j, const char* field) {
  auto it = j.find(field);
  if (it == j.end()) throw ProtocolError(std::string("missing required field: ") + field);
  return *it;
}

}  // namespace

json to_json(const RegionSpec& r) {
  return json{{"x0", r.x0}, {"y0", r.y0}, {"x1", r.x1}, {"y1", r.y1},
              {"magnification", r.magnification}};
}

RegionSpec region_from_json(const json& j) {
  RegionSpec r;
  r.x0 = require(j, "x0").get<std::int64_t>();
  r.y0 = require(j, "y0").get<std::int64_t>();
  r.x1 = require(j, "x1").get<std::int64_t>();
  r.y1 = require(j, "y1").get<std::int64_t>();
  r.magnification = require(j, "magnification").get<double>();
  return r;
}

json to_json(const TaskSpec& t) {
  return json{{"task_id", t.task_id},
              {"tissue_box_index", t.tissue_box_index},
              {"region", to_json(t.region)},
              {"features_to_document", t.features_to_document},
              {"context", t.context},
              {"budget", t.budget}};
}

TaskSpec task_from_json(const json& j) {
  TaskSpec t;
  t.task_id = require(j, "task_id").get<std::string>();
  t.tissue_box_index = require(j, "tissue_box_index").get<int>();
  t.region = region_from_json(require(j, "region"));
  t.features_to_document = require(j, "features_to_document").get<std::string>();
  t.context = require(j, "context").get<std::string>();
  t.budget = require(j, "budget").get<int>();
  return t;
}

json to_json(const ROIRecord& r) {
  return json{{"roi_id", r.roi_id},         {"region", to_json(r.region)},
              {"caption", r.caption},       {"source_task", r.source_task},
              {"flagged_relevant", r.flagged_relevant},
              {"relevance", r.relevance},   {"round", r.round}};
}

ROIRecord roi_from_json(const json& j) {
  ROIRecord r;
  r.roi_id = require(j, "roi_id").get<int>();
  r.region = region_from_json(require(j, "region"));
  r.caption = require(j, "caption").get<std::string>();
  r.source_task = require(j, "source_task").get<std::string>();
  r.flagged_relevant = require(j, "flagged_relevant").get<bool>();
  r.relevance = require(j, "relevance").get<double>();
  r.round = require(j, "round").get<int>();
  return r;
}

json to_json(const ExplorerReport& r) {
  json rois = json::array();
  for (const ROIRecord& roi : r.rois) rois.push_back(to_json(roi));
  return json{{"task_id", r.task_id}, {"findings", r.findings}, {"rois", std::move(rois)},
              {"views_used", r.views_used}};
}

ExplorerReport report_from_json(const json& j) {
  ExplorerReport r;
  r.task_id = require(j, "task_id").get<std::string>();
  r.findings = require(j, "findings").get<std::string>();
  for (const auto& roi : require(j, "rois")) r.rois.push_back(roi_from_json(roi));
  r.views_used = require(j, "views_used").get<int>();
  return r;
}

json to_json(const DiagnosisReport& r) {
  json rois = json::array();
  for (const ROIRecord& roi : r.cited_rois) rois.push_back(to_json(roi));
  return json{{"primary_diagnosis", r.primary_diagnosis},
              {"differentials", r.differentials},
              {"confidence", to_string(r.confidence)},
              {"narrative", r.narrative},
              {"cited_rois", std::move(rois)}};
}

DiagnosisReport diagnosis_from_json(const json& j) {
  DiagnosisReport r;
  r.primary_diagnosis = require(j, "primary_diagnosis").get<std::string>();
  r.differentials = require(j, "differentials").get<std::vector<std::string>>();
  r.confidence = confidence_from_string(require(j, "confidence").get<std::string>());
  r.narrative = require(j, "narrative").get<std::string>();
  for (const auto& roi : require(j, "cited_rois")) r.cited_rois.push_back(roi_from_json(roi));
  if (r.differentials.size() != 2) throw ProtocolError("diagnosis must carry exactly 2 differentials");
  if (r.cited_rois.size() > 10) throw ProtocolError("diagnosis cites more than 10 ROIs");
  return r;
}

std::string encode_event(const TraceEvent& event) {
  ordered_json j;
  j["seq"] = event.seq;
  j["wall_time_ms"] = event.wall_time_ms;
  j["actor"] = event.actor;
  j["kind"] = to_string(event.kind);
  j["payload"] = event.payload;
  return j.dump();
}

TraceEvent decode_event(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("malformed trace line: ") + e.what());
  }
  TraceEvent e;
  e.seq = require(j, "seq").get<std::uint64_t>();
  e.wall_time_ms = require(j, "wall_time_ms").get<std::int64_t>();
  e.actor = require(j, "actor").get<std::string>();
  e.kind = event_kind_from_string(require(j, "kind").get<std::string>());
  e.payload = require(j, "payload");
  return e;
}

const std::vector<std::string> kUnavailableModalities = {
    "ihc", "immunohistochem", "special stain", "molecular"};

namespace {

std::string lowercase(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

}  // namespace

std::vector<std::string> validate_task(const TaskSpec& task, const PyramidSlide& slide) {
  std::vector<std::string> violations = validate_region(slide, task.region);
  if (task.budget < 1) violations.push_back("budget must be >= 1");
  if (task.task_id.empty()) violations.push_back("empty task_id");

  std::string haystack = lowercase(task.features_to_document + " " + task.context);
  for (const std::string& modality : kUnavailableModalities) {
    if (haystack.find(modality) != std::string::npos) {
      violations.push_back("modality not available: " + modality);
      break;
    }
  }
  return violations;
}

}  // namespace slideseek

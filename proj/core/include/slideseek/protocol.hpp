#pragma once

#include "slideseek/slide.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace slideseek {

struct ProtocolError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Supervisor-issued instruction for one explorer.
struct TaskSpec {
  std::string task_id;
  int tissue_box_index = -1;  // -1 means whole slide
  RegionSpec region;          // region.magnification is the working power
  std::string features_to_document;
  std::string context;
  int budget = 1;

  bool operator==(const TaskSpec&) const = default;
};

struct ROIRecord {
  int roi_id = 0;
  RegionSpec region;
  std::string caption;
  std::string source_task;
  bool flagged_relevant = false;
  double relevance = 0.0;
  int round = 0;

  bool operator==(const ROIRecord&) const = default;
};

struct ExplorerReport {
  std::string task_id;
  std::string findings;
  std::vector<ROIRecord> rois;
  int views_used = 0;

  bool operator==(const ExplorerReport&) const = default;
};

struct SupervisorState {
  std::vector<std::string> hypotheses;
  std::string plan;
  std::string current_step;
  std::vector<TaskSpec> pending_tasks;
  std::vector<ExplorerReport> received_reports;
  std::vector<std::string> justifications;
  bool finished = false;
  int round = 0;

  bool operator==(const SupervisorState&) const = default;
};

enum class Confidence { Low, High };

std::string to_string(Confidence c);
Confidence confidence_from_string(const std::string& s);

struct DiagnosisReport {
  std::string primary_diagnosis;
  std::vector<std::string> differentials;  // exactly 2
  Confidence confidence = Confidence::Low;
  std::string narrative;
  std::vector<ROIRecord> cited_rois;  // <= 10

  bool operator==(const DiagnosisReport&) const = default;
};

enum class EventKind {
  Plan,
  TaskIssued,
  View,
  Caption,
  Report,
  Review,
  Collate,
  Diagnose,
  Finalize,
};

std::string to_string(EventKind k);
EventKind event_kind_from_string(const std::string& s);

struct TraceEvent {
  std::uint64_t seq = 0;
  std::int64_t wall_time_ms = 0;
  std::string actor;  // "supervisor", "explorer:<task_id>", "backend"
  EventKind kind = EventKind::Plan;
  nlohmann::json payload;

  bool operator==(const TraceEvent&) const = default;
};

/// JSON-lines trace codec; `seq` is always the first key. Decoding is strict:
/// missing required fields or unknown kinds are errors, never defaults.
std::string encode_event(const TraceEvent& event);
TraceEvent decode_event(const std::string& line);

// JSON conversions for the exchanged value types (strict readers).
nlohmann::json to_json(const RegionSpec& r);
RegionSpec region_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TaskSpec& t);
TaskSpec task_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ROIRecord& r);
ROIRecord roi_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExplorerReport& r);
ExplorerReport report_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DiagnosisReport& r);
DiagnosisReport diagnosis_from_json(const nlohmann::json& j);

/// Modalities a bright-field H&E slide cannot provide; tasks requesting them
/// are rejected outright.
extern const std::vector<std::string> kUnavailableModalities;

/// Returns every violation (bounds, magnification, budget, modality), not
/// just the first. Empty result means the task is valid.
std::vector<std::string> validate_task(const TaskSpec& task, const PyramidSlide& slide);

}  // namespace slideseek

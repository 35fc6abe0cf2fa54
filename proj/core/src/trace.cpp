#include "slideseek/trace.hpp"

#include <chrono>
#include <fstream>
#include <map>
#include <set>

namespace slideseek {

using nlohmann::json;

TraceWriter::TraceWriter(std::ostream* sink, bool logical_clock)
    : sink_(sink), logical_clock_(logical_clock) {}

std::uint64_t TraceWriter::append(const std::string& actor, EventKind kind, json payload) {
  std::lock_guard<std::mutex> lock(mutex_);
  TraceEvent e;
  e.seq = next_seq_++;
  e.wall_time_ms = logical_clock_
                       ? static_cast<std::int64_t>(e.seq)
                       : std::chrono::duration_cast<std::chrono::milliseconds>(
                             std::chrono::system_clock::now().time_since_epoch())
                             .count();
  e.actor = actor;
  e.kind = kind;
  e.payload = std::move(payload);
  if (sink_) {
    (*sink_) << encode_event(e) << "\n";
    sink_->flush();
  }
  events_.push_back(std::move(e));
  return events_.back().seq;
}

void TraceWriter::append_all(const std::vector<PendingEvent>& events) {
  for (const PendingEvent& p : events) append(p.actor, p.kind, p.payload);
}

std::vector<TraceEvent> load_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ProtocolError("trace file not found: " + path.string());
  std::vector<TraceEvent> events;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      events.push_back(decode_event(line));
    } catch (const ProtocolError& e) {
      throw ProtocolError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return events;
}

std::vector<std::string> verify_trace(const std::vector<TraceEvent>& events) {
  std::vector<std::string> violations;
  auto complain = [&](const std::string& msg) { violations.push_back(msg); };

  for (std::size_t i = 0; i < events.size(); ++i) {
    if (events[i].seq != i) {
      complain("seq gap at index " + std::to_string(i));
      break;
    }
  }

  bool finished = false;
  bool expect_review = false;
  std::map<std::string, int> reports_per_task;
  std::map<std::string, std::uint64_t> report_seq;
  std::set<std::string> issued;
  std::uint64_t view_events = 0;
  std::int64_t views_used_sum = 0;

  for (const TraceEvent& e : events) {
    switch (e.kind) {
      case EventKind::Plan:
        if (finished) complain("plan event after finished at seq " + std::to_string(e.seq));
        if (expect_review) complain("plan without preceding review at seq " + std::to_string(e.seq));
        if (e.payload.value("finished", false)) finished = true;
        else expect_review = true;
        break;
      case EventKind::Review:
        if (!expect_review) complain("review without open plan at seq " + std::to_string(e.seq));
        expect_review = false;
        if (e.payload.value("finished", false)) finished = true;
        break;
      case EventKind::TaskIssued: {
        if (finished) complain("task issued after finished at seq " + std::to_string(e.seq));
        std::string id = e.payload.at("task").at("task_id").get<std::string>();
        if (!issued.insert(id).second) complain("duplicate task id " + id);
        break;
      }
      case EventKind::Report: {
        std::string id = e.payload.at("report").at("task_id").get<std::string>();
        ++reports_per_task[id];
        report_seq[id] = e.seq;
        views_used_sum += e.payload.at("report").at("views_used").get<int>();
        break;
      }
      case EventKind::View:
        ++view_events;
        break;
      case EventKind::Finalize:
        if (e.payload.contains("report")) {
          if (e.payload.at("report").at("cited_rois").size() > 10) {
            complain("finalize cites more than 10 ROIs");
          }
        }
        break;
      default:
        break;
    }
  }

  for (const std::string& id : issued) {
    int n = reports_per_task.count(id) ? reports_per_task[id] : 0;
    if (n != 1) {
      complain("task " + id + " has " + std::to_string(n) + " reports");
    }
  }
  for (const auto& [id, n] : reports_per_task) {
    if (!issued.count(id)) complain("report for unknown task " + id);
  }

  // Causality: a task's views precede its report.
  for (const TraceEvent& e : events) {
    if (e.kind != EventKind::View) continue;
    std::string id = e.payload.at("task_id").get<std::string>();
    auto it = report_seq.find(id);
    if (it != report_seq.end() && e.seq > it->second) {
      complain("view after report for task " + id);
    }
  }

  if (views_used_sum != static_cast<std::int64_t>(view_events)) {
    complain("views_used sum " + std::to_string(views_used_sum) + " != view events " +
             std::to_string(view_events));
  }
  return violations;
}

std::vector<SupervisorState> fold_trace(const std::vector<TraceEvent>& events) {
  std::vector<SupervisorState> states;
  SupervisorState state;
  for (const TraceEvent& e : events) {
    switch (e.kind) {
      case EventKind::Plan: {
        state.round = e.payload.at("round").get<int>();
        state.hypotheses = e.payload.at("hypotheses").get<std::vector<std::string>>();
        state.plan = e.payload.at("plan").get<std::string>();
        state.current_step = e.payload.value("current_step", std::string());
        state.finished = e.payload.at("finished").get<bool>();
        state.pending_tasks.clear();
        for (const auto& t : e.payload.at("tasks")) state.pending_tasks.push_back(task_from_json(t));
        states.push_back(state);
        break;
      }
      case EventKind::Report: {
        ExplorerReport report = report_from_json(e.payload.at("report"));
        std::erase_if(state.pending_tasks,
                      [&](const TaskSpec& t) { return t.task_id == report.task_id; });
        state.received_reports.push_back(std::move(report));
        break;
      }
      case EventKind::Review: {
        state.hypotheses = e.payload.at("hypotheses").get<std::vector<std::string>>();
        for (const auto& j : e.payload.at("justifications")) {
          state.justifications.push_back(j.get<std::string>());
        }
        state.finished = e.payload.at("finished").get<bool>();
        states.push_back(state);
        break;
      }
      default:
        break;
    }
  }
  return states;
}

}  // namespace slideseek

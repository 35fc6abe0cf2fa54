#pragma once

#include "slideseek/protocol.hpp"

#include <filesystem>
#include <mutex>
#include <ostream>
#include <vector>

namespace slideseek {

/// A pending event without a sequence number; explorers accumulate these
/// locally so a round's parallel tasks can be flushed in deterministic order.
struct PendingEvent {
  std::string actor;
  EventKind kind;
  nlohmann::json payload;
};

/// The single serialized appender: assigns gapless seq numbers and writes
/// JSON-lines. With a logical clock (the default for mock runs) timestamps
/// are a pure function of seq, so equal-seed runs produce identical bytes.
class TraceWriter {
 public:
  explicit TraceWriter(std::ostream* sink = nullptr, bool logical_clock = true);

  std::uint64_t append(const std::string& actor, EventKind kind, nlohmann::json payload);
  void append_all(const std::vector<PendingEvent>& events);

  const std::vector<TraceEvent>& events() const { return events_; }
  std::uint64_t next_seq() const { return next_seq_; }

 private:
  std::mutex mutex_;
  std::ostream* sink_;
  bool logical_clock_;
  std::uint64_t next_seq_ = 0;
  std::vector<TraceEvent> events_;
};

/// Loads a JSON-lines trace; parse failures name the 1-based line number.
std::vector<TraceEvent> load_trace(const std::filesystem::path& path);

/// Structural checks over a complete trace: gapless seq from 0, plan/review
/// alternation, no tasks after the finished flag, exactly one report per
/// issued task, per-task views preceding the report, and the <= 10 cited-ROI
/// cap. Returns every violation found.
std::vector<std::string> verify_trace(const std::vector<TraceEvent>& events);

/// Pure fold of a trace into the supervisor state after each plan/review
/// event, in order.
std::vector<SupervisorState> fold_trace(const std::vector<TraceEvent>& events);

}  // namespace slideseek

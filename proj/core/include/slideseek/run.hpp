#pragma once

#include "slideseek/config.hpp"
#include "slideseek/protocol.hpp"

#include <filesystem>

namespace slideseek {

struct RunError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunResult {
  DiagnosisReport report;
  std::filesystem::path trace_path;
  std::filesystem::path report_json_path;
  std::filesystem::path report_md_path;
  std::filesystem::path thumbnail_path;
};

/// Canonical serializations shared by the live run and replay so the two can
/// be compared byte-for-byte.
std::string render_report_json(const DiagnosisReport& report);
std::string render_report_md(const DiagnosisReport& report);

/// Opens the slide, detects tissue, runs the full supervisor loop with the
/// configured backend, and writes trace.jsonl, report.json, report.md, and an
/// annotated thumbnail.png into out_dir.
RunResult run_exploration(const std::filesystem::path& slide_dir, const RunConfig& config,
                          const std::filesystem::path& out_dir,
                          const std::string& clinical_context =
                              "Histologic evaluation of a surgical specimen.");

struct ReplayResult {
  bool ok = true;
  std::vector<std::string> mismatches;
};

/// Deterministic replay: verifies trace structure, re-extracts every logged
/// view against the slide and compares pixel digests, and regenerates
/// report.json from the finalize event, comparing it byte-for-byte with the
/// sibling report.json when present. Pixel checks apply to mock-backend
/// traces; other backends get the structural checks only.
ReplayResult replay_run(const std::filesystem::path& trace_file,
                        const std::filesystem::path& slide_dir);

}  // namespace slideseek

#include "slideseek/run.hpp"

#include "slideseek/http_backend.hpp"
#include "slideseek/mock_backend.hpp"
#include "slideseek/supervisor.hpp"
#include "slideseek/synthetic.hpp"
#include "slideseek/trace.hpp"

#include <fstream>
#include <sstream>

namespace slideseek {

using nlohmann::json;

std::string render_report_json(const DiagnosisReport& report) {
  return to_json(report).dump(2) + "\n";
}

std::string render_report_md(const DiagnosisReport& report) {
  std::ostringstream md;
  md << "# Diagnostic report\n\n";
  md << "**Primary diagnosis:** " << report.primary_diagnosis << "\n\n";
  md << "**Differentials:**\n";
  for (const std::string& d : report.differentials) md << "- " << d << "\n";
  md << "\n**Confidence:** " << to_string(report.confidence) << "\n\n";
  md << "## Narrative\n\n" << report.narrative << "\n";
  if (!report.cited_rois.empty()) {
    md << "\n## Cited regions of interest\n\n";
    md << "| ROI | Region (x0, y0, x1, y1) | Magnification | Caption |\n";
    md << "| --- | --- | --- | --- |\n";
    for (const ROIRecord& roi : report.cited_rois) {
      md << "| " << roi.roi_id << " | (" << roi.region.x0 << ", " << roi.region.y0 << ", "
         << roi.region.x1 << ", " << roi.region.y1 << ") | " << roi.region.magnification
         << "x | " << roi.caption << " |\n";
    }
  }
  return md.str();
}

namespace {

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RunError("cannot write " + path.string());
  out << content;
}

}  // namespace

RunResult run_exploration(const std::filesystem::path& slide_dir, const RunConfig& config,
                          const std::filesystem::path& out_dir,
                          const std::string& clinical_context) {
  PyramidSlide slide = open_slide(slide_dir);
  std::vector<TissueBox> boxes = detect_tissue(slide);

  std::filesystem::create_directories(out_dir);
  RunResult result;
  result.trace_path = out_dir / "trace.jsonl";
  result.report_json_path = out_dir / "report.json";
  result.report_md_path = out_dir / "report.md";
  result.thumbnail_path = out_dir / "thumbnail.png";

  std::ofstream trace_sink(result.trace_path, std::ios::binary);
  if (!trace_sink) throw RunError("cannot write " + result.trace_path.string());

  if (config.backend == "mock") {
    auto truth = load_truth(slide_dir);
    if (!truth) throw RunError("mock backend requires truth.json next to the slide tiles");
    // Logical clock: timestamps are a pure function of seq, so equal-seed
    // runs are byte-identical.
    TraceWriter trace(&trace_sink, /*logical_clock=*/true);
    MockCaptioner captioner(*truth, config.overlap_threshold);
    ScriptedPolicy policy(config);
    Supervisor supervisor(slide, boxes, clinical_context, policy, captioner, trace, config);
    result.report = supervisor.run();
  } else if (config.backend == "http") {
    TraceWriter trace(&trace_sink, /*logical_clock=*/false);
    HttpChatBackend backend(config.http, &trace);
    Supervisor supervisor(slide, boxes, clinical_context, backend, backend, trace, config);
    result.report = supervisor.run();
  } else {
    throw RunError("unknown backend: " + config.backend);
  }
  trace_sink.close();

  write_text_file(result.report_json_path, render_report_json(result.report));
  write_text_file(result.report_md_path, render_report_md(result.report));

  std::vector<RegionSpec> cited;
  for (const ROIRecord& roi : result.report.cited_rois) cited.push_back(roi.region);
  save_png(result.thumbnail_path, render_thumbnail(slide, cited, 512));
  return result;
}

ReplayResult replay_run(const std::filesystem::path& trace_file,
                        const std::filesystem::path& slide_dir) {
  ReplayResult result;
  std::vector<TraceEvent> events = load_trace(trace_file);

  for (const std::string& v : verify_trace(events)) {
    result.mismatches.push_back("structure: " + v);
  }

  // The round-0 plan event carries the run configuration.
  std::string backend = "mock";
  for (const TraceEvent& ev : events) {
    if (ev.kind == EventKind::Plan && ev.payload.contains("config")) {
      backend = ev.payload.at("config").value("backend", "mock");
      break;
    }
  }

  // Replays the fold to confirm the state machine is reconstructible.
  try {
    fold_trace(events);
  } catch (const std::exception& e) {
    result.mismatches.push_back(std::string("fold: ") + e.what());
  }

  if (backend == "mock") {
    PyramidSlide slide = open_slide(slide_dir);
    for (const TraceEvent& ev : events) {
      if (ev.kind != EventKind::View) continue;
      try {
        RegionSpec region = region_from_json(ev.payload.at("region"));
        int max_edge = ev.payload.at("max_edge").get<int>();
        RasterImage image = read_region(slide, region, max_edge);
        std::uint64_t expected = ev.payload.at("image_digest").get<std::uint64_t>();
        if (pixel_digest(image) != expected) {
          result.mismatches.push_back("view seq " + std::to_string(ev.seq) +
                                      ": pixel digest mismatch");
        }
        if (image.width != ev.payload.at("width").get<std::int64_t>() ||
            image.height != ev.payload.at("height").get<std::int64_t>()) {
          result.mismatches.push_back("view seq " + std::to_string(ev.seq) +
                                      ": rendered extent mismatch");
        }
      } catch (const std::exception& e) {
        result.mismatches.push_back("view seq " + std::to_string(ev.seq) + ": " + e.what());
      }
    }
  }

  // Regenerate report.json from the finalize event and compare bytes.
  const TraceEvent* final_event = nullptr;
  for (const TraceEvent& ev : events) {
    if (ev.kind == EventKind::Finalize && ev.payload.contains("report")) final_event = &ev;
  }
  if (!final_event) {
    result.mismatches.push_back("trace has no finalize report event");
  } else {
    std::filesystem::path report_path = trace_file.parent_path() / "report.json";
    if (std::filesystem::exists(report_path)) {
      try {
        DiagnosisReport report = diagnosis_from_json(final_event->payload.at("report"));
        std::ifstream in(report_path, std::ios::binary);
        std::stringstream buf;
        buf << in.rdbuf();
        if (buf.str() != render_report_json(report)) {
          result.mismatches.push_back("report.json differs from the trace finalize event");
        }
      } catch (const std::exception& e) {
        result.mismatches.push_back(std::string("report: ") + e.what());
      }
    }
  }

  result.ok = result.mismatches.empty();
  return result;
}

}  // namespace slideseek

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "slideseek/mock_backend.hpp"
#include "slideseek/run.hpp"
#include "slideseek/supervisor.hpp"
#include "slideseek/synthetic.hpp"
#include "slideseek/trace.hpp"

#include <algorithm>

using namespace slideseek;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  return dir;
}

struct Fixture {
  PyramidSlide slide;
  SlideTruth truth;
  std::vector<TissueBox> boxes;
};

// One blob, one comfortably detectable lesion, both grid-offset.
Fixture lesion_fixture() {
  static Fixture f = [] {
    SyntheticSlideSpec spec;
    spec.slide_id = "agents";
    spec.width = 2048;
    spec.height = 2048;
    spec.tissue_blobs = {{150, 150, 1942, 1942}};
    spec.lesion_foci = {{{300, 300, 1400, 1400}, "invasive carcinoma"}};
    spec.rng_seed = 9;
    Fixture fx;
    fx.slide = generate_synthetic(spec, temp_dir("slideseek_agents_slide"));
    fx.truth = *load_truth(fx.slide.root);
    fx.boxes = detect_tissue(fx.slide);
    return fx;
  }();
  return f;
}

Fixture benign_fixture() {
  static Fixture f = [] {
    SyntheticSlideSpec spec;
    spec.slide_id = "benign";
    spec.width = 1024;
    spec.height = 1024;
    spec.tissue_blobs = {{150, 150, 900, 900}};
    spec.rng_seed = 10;
    Fixture fx;
    fx.slide = generate_synthetic(spec, temp_dir("slideseek_benign_slide"));
    fx.truth = *load_truth(fx.slide.root);
    fx.boxes = detect_tissue(fx.slide);
    return fx;
  }();
  return f;
}

}  // namespace

TEST_CASE("init embeds slide geometry and the clinical context verbatim") {
  Fixture f = lesion_fixture();
  RunConfig config;
  MockCaptioner captioner(f.truth, config.overlap_threshold);
  ScriptedPolicy policy(config);
  TraceWriter trace;
  const std::string context = "68-year-old, breast mass, rule out malignancy";
  Supervisor supervisor(f.slide, f.boxes, context, policy, captioner, trace, config);
  supervisor.init();

  CHECK(supervisor.init_prompt().find(context) != std::string::npos);
  CHECK(supervisor.init_prompt().find("2048") != std::string::npos);
  for (const TissueBox& b : f.boxes) {
    CHECK(supervisor.init_prompt().find(std::to_string(b.x0)) != std::string::npos);
  }
  REQUIRE_FALSE(supervisor.state().hypotheses.empty());
  CHECK(supervisor.state().hypotheses[0] == "lesion present");
  CHECK_FALSE(supervisor.state().plan.empty());
}

TEST_CASE("round 0 plans one coarse architectural task per tissue box") {
  Fixture f = lesion_fixture();
  RunConfig config;
  MockCaptioner captioner(f.truth, config.overlap_threshold);
  ScriptedPolicy policy(config);
  TraceWriter trace;
  Supervisor supervisor(f.slide, f.boxes, "ctx", policy, captioner, trace, config);
  supervisor.init();

  auto tasks = supervisor.plan_round();
  REQUIRE(tasks.has_value());
  REQUIRE(tasks->size() == f.boxes.size());
  for (std::size_t i = 0; i < tasks->size(); ++i) {
    const TaskSpec& t = (*tasks)[i];
    CHECK(t.task_id == "t0-" + std::to_string(i));
    CHECK(t.region.magnification == config.coarse_magnification);
    CHECK(t.budget == 4);
    CHECK(t.tissue_box_index == static_cast<int>(i));
    CHECK(validate_task(t, f.slide).empty());
  }
  // The round-0 plan event records the run configuration for replay.
  REQUIRE_FALSE(trace.events().empty());
  const TraceEvent& plan = trace.events()[0];
  REQUIRE(plan.kind == EventKind::Plan);
  CHECK(plan.payload.at("config").at("backend") == "mock");
  CHECK(plan.payload.at("config").at("max_view_edge") == config.max_view_edge);
}

TEST_CASE("duplicate reports are rejected") {
  Fixture f = lesion_fixture();
  RunConfig config;
  MockCaptioner captioner(f.truth, config.overlap_threshold);
  ScriptedPolicy policy(config);
  TraceWriter trace;
  Supervisor supervisor(f.slide, f.boxes, "ctx", policy, captioner, trace, config);
  supervisor.init();
  auto tasks = supervisor.plan_round();
  REQUIRE(tasks.has_value());

  ExplorerReport rep{(*tasks)[0].task_id, "findings", {}, 1};
  CHECK_THROWS_WITH_AS(supervisor.review_reports({rep, rep}), doctest::Contains("duplicate"),
                       ProtocolError);
  CHECK_THROWS_WITH_AS(supervisor.review_reports({ExplorerReport{"t9-9", "f", {}, 1}}),
                       doctest::Contains("unknown task"), ProtocolError);

  ExplorerReport over{(*tasks)[0].task_id, "findings", {}, 99};
  CHECK_THROWS_WITH_AS(supervisor.review_reports({over}), doctest::Contains("budget"),
                       ProtocolError);
}

TEST_CASE("full mock run finds the lesion, names it, and leaves a verifiable trace") {
  Fixture f = lesion_fixture();
  RunConfig config;
  MockCaptioner captioner(f.truth, config.overlap_threshold);
  ScriptedPolicy policy(config);
  TraceWriter trace;
  Supervisor supervisor(f.slide, f.boxes, "ctx", policy, captioner, trace, config);
  DiagnosisReport report = supervisor.run();

  CHECK(report.primary_diagnosis == "invasive carcinoma");
  CHECK(report.confidence == Confidence::High);
  CHECK(report.differentials.size() == 2);
  REQUIRE_FALSE(report.cited_rois.empty());
  CHECK(report.cited_rois.size() <= 10);

  // Every cited ROI genuinely intersects the lesion.
  const Box& lesion = f.truth.lesion_foci[0].box;
  for (const ROIRecord& roi : report.cited_rois) {
    CHECK(roi.flagged_relevant);
    Box b{roi.region.x0, roi.region.y0, roi.region.x1, roi.region.y1};
    CHECK(box_intersection_area(b, lesion) > 0);
  }
  // Relevance-sorted, ties by round then id.
  for (std::size_t i = 1; i < report.cited_rois.size(); ++i) {
    const ROIRecord& a = report.cited_rois[i - 1];
    const ROIRecord& b = report.cited_rois[i];
    CHECK(std::tie(b.relevance, a.round, a.roi_id) <= std::tie(a.relevance, b.round, b.roi_id));
  }
  // The narrative cites only collated ROIs (enforced internally; spot-check).
  CHECK(report.narrative.find("[ROI ") != std::string::npos);

  CHECK(verify_trace(trace.events()).empty());

  // Hypothesis promotion: after review the lesion hypothesis leads.
  bool promoted = false;
  for (const TraceEvent& e : trace.events()) {
    if (e.kind == EventKind::Review && !e.payload.at("hypotheses").empty() &&
        e.payload.at("hypotheses")[0] == "lesion present") {
      promoted = true;
    }
  }
  CHECK(promoted);
}

TEST_CASE("a benign slide ends Low confidence with no lesion call") {
  Fixture f = benign_fixture();
  RunConfig config;
  MockCaptioner captioner(f.truth, config.overlap_threshold);
  ScriptedPolicy policy(config);
  TraceWriter trace;
  Supervisor supervisor(f.slide, f.boxes, "ctx", policy, captioner, trace, config);
  DiagnosisReport report = supervisor.run();
  CHECK(report.primary_diagnosis == "non-diagnostic");
  CHECK(report.confidence == Confidence::Low);
  CHECK(report.cited_rois.empty());
  CHECK(verify_trace(trace.events()).empty());
}

TEST_CASE("a slide with no tissue at all finishes immediately") {
  fs::path dir = temp_dir("slideseek_empty_slide");
  SyntheticSlideSpec spec;
  spec.slide_id = "empty";
  spec.width = 1024;
  spec.height = 1024;
  spec.rng_seed = 2;
  PyramidSlide slide = generate_synthetic(spec, dir);
  std::vector<TissueBox> boxes = detect_tissue(slide);
  REQUIRE(boxes.empty());

  RunConfig config;
  MockCaptioner captioner(*load_truth(dir), config.overlap_threshold);
  ScriptedPolicy policy(config);
  TraceWriter trace;
  Supervisor supervisor(slide, boxes, "ctx", policy, captioner, trace, config);
  supervisor.init();
  CHECK(supervisor.state().hypotheses == std::vector<std::string>{"no tissue present"});
  // With no tissue the very first planning cycle declares completion.
  CHECK_FALSE(supervisor.plan_round().has_value());
  std::vector<ROIRecord> rois = supervisor.collate_rois();
  CHECK(rois.empty());
  DiagnosisReport report = supervisor.finalize(rois);
  CHECK(report.primary_diagnosis == "non-diagnostic");
  fs::remove_all(dir);
}

TEST_CASE("explorer sweeps the task region in row-major screening cells") {
  Fixture f = lesion_fixture();
  RunConfig config;
  MockCaptioner captioner(f.truth, config.overlap_threshold);
  ScriptedPolicy policy(config);

  TaskSpec task;
  task.task_id = "t1-0";
  task.tissue_box_index = 0;
  task.region = {150, 150, 1942, 1942, 20.0};  // 1792 wide: 2x2 cells of 896
  task.features_to_document = "screening";
  task.budget = 24;

  std::vector<PendingEvent> log;
  ExplorerReport report = run_task(task, f.slide, captioner, policy, config, log, 1, 101000);
  CHECK(report.views_used == 4);
  REQUIRE(report.rois.size() == 4);
  CHECK(report.rois[0].roi_id == 101000);
  CHECK(report.rois[3].roi_id == 101003);
  // Row-major: first two views share y0, the third starts the next row.
  std::vector<RegionSpec> viewed;
  for (const PendingEvent& e : log) {
    if (e.kind == EventKind::View) viewed.push_back(region_from_json(e.payload.at("region")));
  }
  REQUIRE(viewed.size() == 4);
  CHECK(viewed[0].y0 == viewed[1].y0);
  CHECK(viewed[0].x0 < viewed[1].x0);
  CHECK(viewed[2].y0 > viewed[0].y0);
  CHECK(viewed[2].x0 == viewed[0].x0);
  // The last log entry is the report.
  CHECK(log.back().kind == EventKind::Report);

  int flagged = static_cast<int>(std::count_if(report.rois.begin(), report.rois.end(),
                                               [](const ROIRecord& r) { return r.flagged_relevant; }));
  CHECK(flagged >= 1);  // lesion is 1100px wide, so some 896-cell sees >= 25%
}

TEST_CASE("budget 1 yields exactly one view before a forced submit") {
  Fixture f = lesion_fixture();
  RunConfig config;
  MockCaptioner captioner(f.truth, config.overlap_threshold);
  ScriptedPolicy policy(config);
  TaskSpec task;
  task.task_id = "t1-0";
  task.region = {150, 150, 1942, 1942, 20.0};
  task.features_to_document = "peek";
  task.budget = 1;
  std::vector<PendingEvent> log;
  ExplorerReport report = run_task(task, f.slide, captioner, policy, config, log, 1, 0);
  CHECK(report.views_used == 1);
}

namespace {

/// Policy that keeps proposing out-of-bounds views.
class RoguePolicy : public DecisionBackend {
 public:
  json decide(const std::string&) override {
    return json{{"action", "view"},
                {"region", {{"x0", -100}, {"y0", -100}, {"x1", 0}, {"y1", 0},
                            {"magnification", 20.0}}},
                {"rationale", "wander off"}};
  }
};

}  // namespace

TEST_CASE("persistent invalid navigation forces a partial submit after one repair") {
  Fixture f = lesion_fixture();
  RunConfig config;
  MockCaptioner captioner(f.truth, config.overlap_threshold);
  RoguePolicy rogue;
  TaskSpec task;
  task.task_id = "t1-0";
  task.region = {150, 150, 1942, 1942, 20.0};
  task.features_to_document = "screening";
  task.budget = 8;
  std::vector<PendingEvent> log;
  ExplorerReport report = run_task(task, f.slide, captioner, rogue, config, log, 1, 0);
  CHECK(report.views_used == 0);
  CHECK(report.findings.find("partial: invalid navigation") != std::string::npos);
}

TEST_CASE("run_exploration and replay_run agree end to end") {
  Fixture f = lesion_fixture();
  fs::path out = temp_dir("slideseek_agents_run");
  RunConfig config;
  RunResult result = run_exploration(f.slide.root, config, out);
  CHECK(fs::exists(result.trace_path));
  CHECK(fs::exists(result.report_json_path));
  CHECK(fs::exists(result.report_md_path));
  CHECK(fs::exists(result.thumbnail_path));
  CHECK(result.report.primary_diagnosis == "invasive carcinoma");

  ReplayResult replay = replay_run(result.trace_path, f.slide.root);
  for (const std::string& m : replay.mismatches) MESSAGE(m);
  CHECK(replay.ok);

  // Tampering with a logged digest must be caught.
  auto events = load_trace(result.trace_path);
  {
    std::ofstream tampered(result.trace_path);
    for (TraceEvent e : events) {
      if (e.kind == EventKind::View) e.payload["image_digest"] = 12345;
      tampered << encode_event(e) << "\n";
    }
  }
  CHECK_FALSE(replay_run(result.trace_path, f.slide.root).ok);
  fs::remove_all(out);
}

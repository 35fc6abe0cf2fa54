#include "slideseek/mock_backend.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace slideseek {

using nlohmann::json;

namespace {

std::string lowercase(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

Box region_box(const RegionSpec& r) { return Box{r.x0, r.y0, r.x1, r.y1}; }

}  // namespace

MockCaptioner::MockCaptioner(SlideTruth truth, double overlap_threshold)
    : truth_(std::move(truth)), overlap_threshold_(overlap_threshold) {}

const std::map<std::string, std::pair<std::string, std::string>>& MockCaptioner::label_map() {
  static const std::map<std::string, std::pair<std::string, std::string>> kMap = {
      {"invasive carcinoma", {"ductal carcinoma in situ", "sclerosing adenosis"}},
      {"adenocarcinoma", {"adenoma with atypia", "reactive glandular atypia"}},
      {"lymphoma", {"reactive lymphoid hyperplasia", "chronic lymphocytic inflammation"}},
  };
  return kMap;
}

std::string MockCaptioner::caption_region(const RasterImage& image, const RegionSpec& region,
                                          const std::string& prompt) {
  (void)image;
  (void)prompt;
  const Box view = region_box(region);
  const double view_area = static_cast<double>(view.area());

  const LesionFocus* best = nullptr;
  double best_overlap = 0.0;
  for (const LesionFocus& f : truth_.lesion_foci) {
    double overlap = static_cast<double>(box_intersection_area(view, f.box)) / view_area;
    if (overlap > best_overlap) {
      best_overlap = overlap;
      best = &f;
    }
  }
  if (best && best_overlap >= overlap_threshold_) {
    return "Sheets of atypical cells with nuclear pleomorphism, consistent with " + best->label +
           ".";
  }

  double tissue_overlap = 0.0;
  for (const Box& b : truth_.tissue_blobs) {
    tissue_overlap += static_cast<double>(box_intersection_area(view, b)) / view_area;
  }
  if (tissue_overlap >= 0.05) {
    return "Unremarkable tissue with preserved architecture.";
  }
  return "Background glass; no tissue features observed.";
}

std::optional<std::string> label_in_caption(const std::string& caption) {
  std::string lower = lowercase(caption);
  for (const auto& [label, distractors] : MockCaptioner::label_map()) {
    if (lower.find(label) != std::string::npos) return label;
  }
  return std::nullopt;
}

Differential MockCaptioner::differential_diagnosis(std::span<const ROIRecord> rois,
                                                   std::span<const RasterImage> images,
                                                   const std::string& context) {
  (void)images;
  (void)context;
  if (rois.empty()) throw BackendError("differential_diagnosis requires at least one ROI");
  if (rois.size() > 10) throw BackendError("differential_diagnosis accepts at most 10 ROIs");

  std::map<std::string, int> votes;
  for (const ROIRecord& roi : rois) {
    if (auto label = label_in_caption(roi.caption)) ++votes[*label];
  }

  Differential d;
  if (votes.empty()) {
    d.primary = "no specific lesion identified";
    d.differentials = {"reactive atypia", "benign proliferative change"};
    return d;
  }
  // Majority label; ties break lexicographically (std::map iterates sorted).
  int best = 0;
  for (const auto& [label, n] : votes) {
    if (n > best) {
      best = n;
      d.primary = label;
    }
  }
  auto it = label_map().find(d.primary);
  const auto& pair = it != label_map().end()
                         ? it->second
                         : std::pair<std::string, std::string>{"reactive atypia",
                                                               "benign proliferative change"};
  d.differentials = {pair.first, pair.second};
  return d;
}

json ScriptedPolicy::decide(const std::string& prompt) {
  json ctx = extract_context_block(prompt);
  std::string phase = ctx.value("phase", std::string());
  if (phase == "init") return decide_init(ctx);
  if (phase == "plan") return decide_plan(ctx);
  if (phase == "review") return decide_review(ctx);
  if (phase == "explore") return decide_explore(ctx);
  if (phase == "finalize") return decide_finalize(ctx);
  throw BackendError("scripted policy: unknown phase " + phase);
}

json ScriptedPolicy::decide_init(const json& ctx) {
  if (ctx.at("boxes").empty()) {
    return json{{"hypotheses", json::array({"no tissue present"})},
                {"plan", "report no tissue"},
                {"current_step", "verify absence of tissue"}};
  }
  return json{{"hypotheses", json::array({"lesion present", "benign only"})},
              {"plan", "coarse architectural survey, then targeted high-power screening"},
              {"current_step", "architectural assessment at low power"}};
}

json ScriptedPolicy::decide_plan(const json& ctx) {
  const int round = ctx.at("round").get<int>();
  const auto& boxes = ctx.at("boxes");
  json tasks = json::array();

  if (boxes.empty()) {
    return json{{"tasks", tasks},
                {"finished", true},
                {"justification", "no tissue detected; nothing to examine"}};
  }

  auto box_task = [&](const json& box, double mag, const std::string& features, int budget) {
    return json{{"tissue_box_index", box.at("index").get<int>()},
                {"region",
                 {{"x0", box.at("x0")},
                  {"y0", box.at("y0")},
                  {"x1", box.at("x1")},
                  {"y1", box.at("y1")},
                  {"magnification", mag}}},
                {"features_to_document", features},
                {"budget", budget}};
  };

  if (round == 0) {
    for (const auto& box : boxes) {
      tasks.push_back(box_task(box, config_.coarse_magnification,
                               "overall architecture and tissue organization", 4));
    }
    return json{{"tasks", tasks},
                {"finished", false},
                {"justification", "architectural assessment of every tissue region at low power"}};
  }
  if (round == 1) {
    for (const auto& box : boxes) {
      tasks.push_back(box_task(box, config_.screening_magnification,
                               "cellular detail; document any malignant morphology",
                               config_.task_budget));
    }
    return json{{"tasks", tasks},
                {"finished", false},
                {"justification",
                 "coarse pass complete; screening every tissue region for cellular detail"}};
  }

  // Follow-up rounds: confirm the strongest flagged ROI of each reporting
  // task, then stop once nothing is outstanding.
  const auto& candidates = ctx.at("followup_candidates");
  std::map<std::string, json> per_task;
  for (const auto& c : candidates) {
    std::string src = c.at("source_task").get<std::string>();
    if (!per_task.count(src)) per_task[src] = c;
  }
  for (const auto& [src, c] : per_task) {
    if (static_cast<int>(tasks.size()) >= ctx.value("fan_out_cap", 6)) break;
    json region = c.at("region");
    region["magnification"] = config_.screening_magnification;
    tasks.push_back(json{{"tissue_box_index", c.value("tissue_box_index", -1)},
                         {"region", region},
                         {"features_to_document", "confirm suspicious morphology at high power"},
                         {"budget", 2}});
  }
  if (tasks.empty()) {
    return json{{"tasks", tasks},
                {"finished", true},
                {"justification", "all tissue screened and flagged regions confirmed; "
                                  "sufficient evidence collected"}};
  }
  return json{{"tasks", tasks},
              {"finished", false},
              {"justification", "confirming flagged regions at high power"}};
}

json ScriptedPolicy::decide_review(const json& ctx) {
  std::vector<std::string> hypotheses = ctx.at("hypotheses").get<std::vector<std::string>>();
  json justifications = json::array();
  int flagged = 0;
  for (const auto& r : ctx.at("reports")) flagged += r.at("flagged_count").get<int>();
  if (flagged > 0) {
    auto it = std::find(hypotheses.begin(), hypotheses.end(), "lesion present");
    if (it != hypotheses.end() && it != hypotheses.begin()) {
      std::rotate(hypotheses.begin(), it, it + 1);
      justifications.push_back(
          "explorers flagged suspicious regions; promoting the lesion hypothesis");
    } else {
      justifications.push_back("further suspicious regions flagged; lesion hypothesis retained");
    }
  } else {
    justifications.push_back("no suspicious findings this round");
  }
  return json{{"hypotheses", hypotheses}, {"justifications", justifications}, {"finished", false}};
}

json ScriptedPolicy::decide_explore(const json& ctx) {
  const json& task = ctx.at("task");
  const json& region = task.at("region");
  const std::int64_t x0 = region.at("x0").get<std::int64_t>();
  const std::int64_t y0 = region.at("y0").get<std::int64_t>();
  const std::int64_t x1 = region.at("x1").get<std::int64_t>();
  const std::int64_t y1 = region.at("y1").get<std::int64_t>();
  const double mag = region.at("magnification").get<double>();
  const std::int64_t cell = std::max<std::int64_t>(1, ctx.at("view_cell_base").get<std::int64_t>());

  const std::int64_t nx = (x1 - x0 + cell - 1) / cell;
  const std::int64_t ny = (y1 - y0 + cell - 1) / cell;
  const std::int64_t total = nx * ny;
  const std::int64_t index = static_cast<std::int64_t>(ctx.at("visited").size());

  if (index >= total) {
    return json{{"action", "submit"}};
  }
  const std::int64_t cx = index % nx;
  const std::int64_t cy = index / nx;
  json view_region = {{"x0", x0 + cx * cell},
                      {"y0", y0 + cy * cell},
                      {"x1", std::min(x1, x0 + (cx + 1) * cell)},
                      {"y1", std::min(y1, y0 + (cy + 1) * cell)},
                      {"magnification", mag}};
  return json{{"action", "view"},
              {"region", view_region},
              {"rationale", "systematic sweep: cell (" + std::to_string(cy) + "," +
                                std::to_string(cx) + ") of " + std::to_string(ny) + "x" +
                                std::to_string(nx) + " grid"}};
}

json ScriptedPolicy::decide_finalize(const json& ctx) {
  const auto& rois = ctx.at("rois");
  const std::string primary = ctx.at("primary").get<std::string>();
  int supporting = 0;
  std::string narrative = "Primary diagnosis: " + primary + ". Supporting evidence: ";
  for (const auto& roi : rois) {
    std::string caption = roi.at("caption").get<std::string>();
    if (lowercase(caption).find(lowercase(primary)) != std::string::npos) ++supporting;
    narrative += "[ROI " + std::to_string(roi.at("roi_id").get<int>()) + "] " + caption + " ";
  }
  bool high = !rois.empty() && supporting * 2 >= static_cast<int>(rois.size());
  return json{{"confidence", high ? "High" : "Low"}, {"narrative", narrative}};
}

}  // namespace slideseek

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "slideseek/http_backend.hpp"
#include "slideseek/mock_backend.hpp"

#include <httplib.h>

#include <atomic>
#include <thread>

using namespace slideseek;
using nlohmann::json;

namespace {

SlideTruth demo_truth() {
  SlideTruth truth;
  truth.tissue_blobs = {{0, 0, 2000, 2000}};
  truth.lesion_foci = {{{500, 500, 1500, 1500}, "invasive carcinoma"}};
  return truth;
}

ROIRecord roi_with_caption(int id, const std::string& caption) {
  ROIRecord roi;
  roi.roi_id = id;
  roi.caption = caption;
  return roi;
}

}  // namespace

TEST_CASE("mock captioner applies the overlap thresholds") {
  MockCaptioner captioner(demo_truth(), 0.25);
  RasterImage img(8, 8);

  // View fully inside the lesion: overlap fraction 1.
  CHECK(captioner.caption_region(img, {600, 600, 1400, 1400, 20.0}, "") ==
        "Sheets of atypical cells with nuclear pleomorphism, consistent with invasive "
        "carcinoma.");

  // Overlap 896x224 of an 896x896 view = 0.25 exactly: at threshold, flagged.
  CHECK(captioner.caption_region(img, {500, 1276, 1396, 2172, 20.0}, "")
            .find("invasive carcinoma") != std::string::npos);

  // One row less overlap (896x223) is just under the threshold: unremarkable.
  CHECK(captioner.caption_region(img, {500, 1277, 1396, 2173, 20.0}, "") ==
        "Unremarkable tissue with preserved architecture.");

  // Inside tissue, away from the lesion.
  CHECK(captioner.caption_region(img, {0, 0, 400, 400, 20.0}, "") ==
        "Unremarkable tissue with preserved architecture.");

  // Off-tissue glass.
  CHECK(captioner.caption_region(img, {2100, 2100, 2500, 2500, 20.0}, "") ==
        "Background glass; no tissue features observed.");
}

TEST_CASE("label_in_caption recognizes known labels case-insensitively") {
  CHECK(label_in_caption("consistent with Invasive Carcinoma.") == "invasive carcinoma");
  CHECK(label_in_caption("suspicious for LYMPHOMA") == "lymphoma");
  CHECK_FALSE(label_in_caption("unremarkable tissue").has_value());
}

TEST_CASE("mock differential takes the majority label with its distractor pair") {
  MockCaptioner captioner(demo_truth(), 0.25);
  std::vector<ROIRecord> rois{
      roi_with_caption(1, "consistent with lymphoma"),
      roi_with_caption(2, "consistent with lymphoma"),
      roi_with_caption(3, "consistent with adenocarcinoma"),
  };
  Differential d = captioner.differential_diagnosis(rois, {}, "ctx");
  CHECK(d.primary == "lymphoma");
  CHECK(d.differentials ==
        std::vector<std::string>{"reactive lymphoid hyperplasia", "chronic lymphocytic inflammation"});

  SUBCASE("ties break lexicographically") {
    rois.push_back(roi_with_caption(4, "consistent with adenocarcinoma"));
    Differential tied = captioner.differential_diagnosis(rois, {}, "ctx");
    CHECK(tied.primary == "adenocarcinoma");
  }

  SUBCASE("no recognizable label falls back to the generic benign pair") {
    std::vector<ROIRecord> plain{roi_with_caption(1, "unremarkable tissue")};
    Differential fallback = captioner.differential_diagnosis(plain, {}, "ctx");
    CHECK(fallback.primary == "no specific lesion identified");
    CHECK(fallback.differentials ==
          std::vector<std::string>{"reactive atypia", "benign proliferative change"});
  }

  SUBCASE("empty and oversized ROI sets are errors") {
    CHECK_THROWS_AS(captioner.differential_diagnosis({}, {}, "ctx"), BackendError);
    std::vector<ROIRecord> many;
    for (int i = 0; i < 11; ++i) many.push_back(roi_with_caption(i, "x"));
    CHECK_THROWS_AS(captioner.differential_diagnosis(many, {}, "ctx"), BackendError);
  }
}

TEST_CASE("context blocks embed and extract losslessly") {
  json ctx = {{"phase", "plan"}, {"round", 2}, {"nested", {{"a", json::array({1, 2, 3})}}}};
  std::string prompt = embed_context_block("Some prose explaining the task.", ctx);
  CHECK(prompt.find("Some prose") != std::string::npos);
  CHECK(extract_context_block(prompt) == ctx);
  CHECK_THROWS_AS(extract_context_block("no block here"), BackendError);
}

namespace {

/// Scripted decision backend: returns each canned response once, in order.
class SequenceBackend : public DecisionBackend {
 public:
  explicit SequenceBackend(std::vector<json> responses) : responses_(std::move(responses)) {}
  json decide(const std::string& prompt) override {
    prompts.push_back(prompt);
    REQUIRE(next_ < responses_.size());
    return responses_[next_++];
  }
  std::vector<std::string> prompts;

 private:
  std::vector<json> responses_;
  std::size_t next_ = 0;
};

}  // namespace

TEST_CASE("decide_validated accepts a conforming response without repair") {
  SequenceBackend backend(std::vector<json>{json{{"action", "submit"}}});
  std::vector<PendingEvent> log;
  json out = decide_validated(backend, "p", DecisionSchema{{{"action", "string"}}}, &log, "a",
                              EventKind::View);
  CHECK(out.at("action") == "submit");
  CHECK(log.empty());
}

TEST_CASE("decide_validated reprompts once with the violations, then gives up") {
  SUBCASE("repair succeeds and is visible in the log") {
    SequenceBackend backend(std::vector<json>{json{{"wrong", 1}}, json{{"action", "submit"}}});
    std::vector<PendingEvent> log;
    json out = decide_validated(backend, "p", DecisionSchema{{{"action", "string"}}}, &log, "a",
                                EventKind::View);
    CHECK(out.at("action") == "submit");
    REQUIRE(log.size() == 1);
    CHECK(log[0].kind == EventKind::View);
    CHECK(log[0].payload.at("repair_reprompt") == true);
    CHECK_FALSE(log[0].payload.at("violations").empty());
    // The reprompt itself must name the violations.
    REQUIRE(backend.prompts.size() == 2);
    CHECK(backend.prompts[1].find("action") != std::string::npos);
  }
  SUBCASE("a second malformed response is an error") {
    SequenceBackend backend(std::vector<json>{json{{"wrong", 1}}, json{{"still", "wrong"}}});
    std::vector<PendingEvent> log;
    CHECK_THROWS_AS(decide_validated(backend, "p", DecisionSchema{{{"action", "string"}}}, &log,
                                     "a", EventKind::View),
                    BackendError);
  }
  SUBCASE("type mismatches count as violations") {
    SequenceBackend backend(std::vector<json>{json{{"action", 7}}, json{{"action", "view"}}});
    std::vector<PendingEvent> log;
    json out = decide_validated(backend, "p", DecisionSchema{{{"action", "string"}}}, &log, "a",
                                EventKind::View);
    CHECK(out.at("action") == "view");
    CHECK(log.size() == 1);
  }
}

TEST_CASE("chat requests carry the image token plan with newline boundary markers") {
  RasterImage small(448, 448);   // 1 tile, 128 tokens
  RasterImage large(896, 896);   // 2x2 + thumbnail, 640 tokens
  std::vector<ChatTurn> turns;
  turns.push_back({"system", "sys", {}});
  ChatTurn user{"user", "describe both", {}};
  user.images.emplace_back(small, plan_grid(small.width, small.height));
  user.images.emplace_back(large, plan_grid(large.width, large.height));
  turns.push_back(std::move(user));

  BackendConfig config;
  json req = build_chat_request(turns, config);
  const json& plan = req.at("image_token_plan");
  REQUIRE(plan.at("images").size() == 2);
  CHECK(plan.at("images")[0].at("tokens") == 128);
  CHECK(plan.at("images")[1].at("tokens") == 640);
  CHECK(plan.at("newline_markers") == 1);
  CHECK(plan.at("placeholder_sequence") == "<|image:128|>\n<|image:640|>");

  // The text part trails the images in the user content.
  const json& content = req.at("messages")[1].at("content");
  CHECK(content.back().at("type") == "text");
  CHECK(content[0].at("type") == "image_url");
  CHECK(content[0].at("image_url").at("url").get<std::string>().rfind("data:image/png;base64,", 0) ==
        0);

  SUBCASE("images on a non-user turn are rejected") {
    std::vector<ChatTurn> bad;
    ChatTurn assistant{"assistant", "here", {}};
    assistant.images.emplace_back(small, plan_grid(small.width, small.height));
    bad.push_back(std::move(assistant));
    CHECK_THROWS_AS(build_chat_request(bad, config), BackendError);
  }
  SUBCASE("image-free requests carry no token plan") {
    std::vector<ChatTurn> plain{{"user", "hello", {}}};
    CHECK_FALSE(build_chat_request(plain, config).contains("image_token_plan"));
  }
}

TEST_CASE("base64 matches known vectors") {
  auto enc = [](const std::string& s) {
    return base64_encode(reinterpret_cast<const std::uint8_t*>(s.data()), s.size());
  };
  CHECK(enc("") == "");
  CHECK(enc("f") == "Zg==");
  CHECK(enc("fo") == "Zm8=");
  CHECK(enc("foo") == "Zm9v");
  CHECK(enc("foobar") == "Zm9vYmFy");
}

TEST_CASE("unreachable endpoints fail with the endpoint in the message and retries in the trace") {
  BackendConfig config;
  config.endpoint = "http://127.0.0.1:9/v1/chat/completions";  // discard port, refused
  config.max_retries = 2;
  config.timeout_s = 2.0;
  TraceWriter trace;
  HttpChatBackend backend(config, &trace);
  CHECK_THROWS_WITH_AS(backend.decide("hello"), doctest::Contains("127.0.0.1:9"), BackendError);
  int retries = 0;
  for (const TraceEvent& e : trace.events()) {
    if (e.payload.contains("retry")) ++retries;
  }
  CHECK(retries == 2);
}

TEST_CASE("transient server errors are retried until a good response arrives") {
  std::atomic<int> hits{0};
  httplib::Server server;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    json body = json::parse(req.body);
    CHECK(body.at("messages").size() == 2);
    if (hits.fetch_add(1) < 2) {
      res.status = 503;
      return;
    }
    json reply = {{"choices",
                   json::array({{{"message", {{"role", "assistant"},
                                              {"content", "{\"action\": \"submit\"}"}}}}})}};
    res.set_content(reply.dump(), "application/json");
  });
  int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread server_thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  BackendConfig config;
  config.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
  config.max_retries = 3;
  TraceWriter trace;
  HttpChatBackend backend(config, &trace);
  json out = backend.decide("choose");
  CHECK(out.at("action") == "submit");
  CHECK(hits.load() == 3);  // two failures + one success

  int retries = 0;
  for (const TraceEvent& e : trace.events()) {
    if (e.payload.contains("retry")) ++retries;
  }
  CHECK(retries == 2);

  server.stop();
  server_thread.join();
}

TEST_CASE("trace log elides image bytes but keeps digests") {
  std::atomic<bool> ok{false};
  httplib::Server server;
  server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    ok = true;
    json reply = {{"choices",
                   json::array({{{"message", {{"role", "assistant"}, {"content", "a caption"}}}}})}};
    res.set_content(reply.dump(), "application/json");
  });
  int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread server_thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  BackendConfig config;
  config.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
  TraceWriter trace;
  HttpChatBackend backend(config, &trace);
  RasterImage img(64, 64);
  std::string caption = backend.caption_region(img, {0, 0, 64, 64, 20.0}, "describe");
  CHECK(caption == "a caption");
  CHECK(ok.load());

  bool saw_request = false;
  for (const TraceEvent& e : trace.events()) {
    if (!e.payload.contains("request")) continue;
    saw_request = true;
    std::string dumped = e.payload.dump();
    CHECK(dumped.find("base64") == std::string::npos);
    CHECK(e.payload.at("request").at("image_digests")[0] == pixel_digest(img));
  }
  CHECK(saw_request);

  server.stop();
  server_thread.join();
}

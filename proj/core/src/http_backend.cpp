#include "slideseek/http_backend.hpp"

#include <httplib.h>

#include <chrono>
#include <cstdlib>
#include <thread>

namespace slideseek {

using nlohmann::json;

std::string base64_encode(const std::uint8_t* data, std::size_t size) {
  static const char* kAlphabet =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((size + 2) / 3 * 4);
  for (std::size_t i = 0; i < size; i += 3) {
    std::uint32_t chunk = static_cast<std::uint32_t>(data[i]) << 16;
    if (i + 1 < size) chunk |= static_cast<std::uint32_t>(data[i + 1]) << 8;
    if (i + 2 < size) chunk |= data[i + 2];
    out.push_back(kAlphabet[(chunk >> 18) & 0x3f]);
    out.push_back(kAlphabet[(chunk >> 12) & 0x3f]);
    out.push_back(i + 1 < size ? kAlphabet[(chunk >> 6) & 0x3f] : '=');
    out.push_back(i + 2 < size ? kAlphabet[chunk & 0x3f] : '=');
  }
  return out;
}

json build_chat_request(const std::vector<ChatTurn>& turns, const BackendConfig& config) {
  json messages = json::array();
  json token_plan = json::array();
  std::string placeholder_sequence;
  int image_index = 0;

  for (const ChatTurn& turn : turns) {
    if (!turn.images.empty() && turn.role != "user") {
      throw BackendError("images are only allowed on user turns");
    }
    if (turn.images.empty()) {
      messages.push_back({{"role", turn.role}, {"content", turn.text}});
      continue;
    }
    json content = json::array();
    for (const auto& [image, plan] : turn.images) {
      auto png = encode_png(image);
      content.push_back(
          {{"type", "image_url"},
           {"image_url", {{"url", "data:image/png;base64," + base64_encode(png.data(), png.size())}}}});
      int tokens = kTokensPerTile * plan.tile_count();
      token_plan.push_back({{"index", image_index},
                            {"grid_cols", plan.grid_cols},
                            {"grid_rows", plan.grid_rows},
                            {"tokens", tokens}});
      if (image_index > 0) placeholder_sequence += "\n";
      placeholder_sequence += "<|image:" + std::to_string(tokens) + "|>";
      ++image_index;
    }
    content.push_back({{"type", "text"}, {"text", turn.text}});
    messages.push_back({{"role", turn.role}, {"content", std::move(content)}});
  }

  json request = {{"model", config.model},
                  {"temperature", config.temperature},
                  {"messages", std::move(messages)}};
  if (image_index > 0) {
    request["image_token_plan"] = {{"images", token_plan},
                                   {"newline_markers", image_index - 1},
                                   {"placeholder_sequence", placeholder_sequence}};
  }
  return request;
}

HttpChatBackend::HttpChatBackend(BackendConfig config, TraceWriter* trace)
    : config_(std::move(config)), trace_(trace) {
  if (config_.timeout_s <= 0) throw BackendError("timeout must be positive");
  if (config_.max_retries < 0) throw BackendError("retries must be >= 0");
}

namespace {

struct ParsedEndpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

ParsedEndpoint parse_endpoint(const std::string& endpoint) {
  std::size_t scheme = endpoint.find("://");
  if (scheme == std::string::npos) throw BackendError("endpoint must include a scheme: " + endpoint);
  std::size_t slash = endpoint.find('/', scheme + 3);
  if (slash == std::string::npos) return {endpoint, "/v1/chat/completions"};
  return {endpoint.substr(0, slash), endpoint.substr(slash)};
}

}  // namespace

std::string HttpChatBackend::complete(const std::vector<ChatTurn>& turns, EventKind log_kind) {
  json request = build_chat_request(turns, config_);

  {
    std::unique_lock<std::mutex> lock(mutex_);
    slots_cv_.wait(lock, [&] { return in_flight_ < config_.max_concurrent; });
    ++in_flight_;
  }
  struct SlotGuard {
    HttpChatBackend* self;
    ~SlotGuard() {
      std::lock_guard<std::mutex> lock(self->mutex_);
      --self->in_flight_;
      self->slots_cv_.notify_one();
    }
  } guard{this};

  // Log with images elided by digest.
  if (trace_) {
    json digests = json::array();
    for (const ChatTurn& turn : turns) {
      for (const auto& [image, plan] : turn.images) digests.push_back(pixel_digest(image));
    }
    json logged = request;
    for (auto& msg : logged["messages"]) {
      if (msg["content"].is_array()) {
        for (auto& part : msg["content"]) {
          if (part.value("type", "") == "image_url") part["image_url"] = "<elided>";
        }
      }
    }
    logged["image_digests"] = digests;
    trace_->append("backend", log_kind, json{{"request", logged}});
  }

  ParsedEndpoint ep = parse_endpoint(config_.endpoint);
  std::string body = request.dump();
  std::string last_error;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      if (trace_) {
        trace_->append("backend", log_kind,
                       json{{"retry", attempt}, {"endpoint", config_.endpoint}, {"error", last_error}});
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(100 << (attempt - 1)));
    }
    httplib::Client client(ep.origin);
    client.set_connection_timeout(std::chrono::duration<double>(config_.timeout_s));
    client.set_read_timeout(std::chrono::duration<double>(config_.timeout_s));
    httplib::Headers headers;
    if (const char* key = std::getenv(config_.api_key_env.c_str())) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
    auto res = client.Post(ep.path, headers, body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    try {
      json response = json::parse(res->body);
      std::string content =
          response.at("choices").at(0).at("message").at("content").get<std::string>();
      if (trace_) {
        trace_->append("backend", log_kind, json{{"response", content}});
      }
      return content;
    } catch (const json::exception& e) {
      last_error = std::string("malformed response: ") + e.what();
    }
  }
  throw BackendError("backend call to " + config_.endpoint + " failed: " + last_error);
}

std::string HttpChatBackend::caption_region(const RasterImage& image, const RegionSpec& region,
                                            const std::string& prompt) {
  (void)region;
  std::vector<ChatTurn> turns;
  turns.push_back({"system",
                   "You are a pathology captioning model. Describe only morphology visible in "
                   "the provided H&E image; do not suggest additional testing.",
                   {}});
  turns.push_back({"user", prompt, {{image, plan_grid(image.width, image.height)}}});
  std::string caption = complete(turns, EventKind::Caption);
  if (caption.empty()) throw BackendError("captioner returned an empty caption");
  return caption;
}

Differential HttpChatBackend::differential_diagnosis(std::span<const ROIRecord> rois,
                                                     std::span<const RasterImage> images,
                                                     const std::string& context) {
  if (rois.empty()) throw BackendError("differential_diagnosis requires at least one ROI");
  std::string prompt =
      "Clinical context: " + context +
      "\nThe attached regions of interest were selected as diagnostically relevant. Respond "
      "with a JSON object {\"primary\": string, \"differentials\": [string, string]} ranking "
      "the most likely diagnosis and exactly two differentials.";
  std::vector<ChatTurn> turns;
  turns.push_back({"system", "You are a diagnostic pathology model.", {}});
  ChatTurn user{"user", prompt, {}};
  for (const RasterImage& img : images) {
    user.images.emplace_back(img, plan_grid(img.width, img.height));
  }
  turns.push_back(std::move(user));

  auto parse = [](const std::string& content) -> std::optional<Differential> {
    try {
      std::size_t start = content.find('{');
      std::size_t end = content.rfind('}');
      if (start == std::string::npos || end == std::string::npos) return std::nullopt;
      json j = json::parse(content.substr(start, end - start + 1));
      Differential d;
      d.primary = j.at("primary").get<std::string>();
      d.differentials = j.at("differentials").get<std::vector<std::string>>();
      if (d.differentials.size() != 2) return std::nullopt;
      return d;
    } catch (const json::exception&) {
      return std::nullopt;
    }
  };

  std::string content = complete(turns, EventKind::Diagnose);
  if (auto d = parse(content)) return *d;
  // One repair attempt for a malformed differential.
  turns.push_back({"assistant", content, {}});
  turns.push_back({"user",
                   "That response was malformed. Reply with exactly the JSON object "
                   "{\"primary\": string, \"differentials\": [string, string]}.",
                   {}});
  content = complete(turns, EventKind::Diagnose);
  if (auto d = parse(content)) return *d;
  throw BackendError("malformed differential after repair");
}

json HttpChatBackend::decide(const std::string& prompt) {
  std::vector<ChatTurn> turns;
  turns.push_back({"system",
                   "You are an agent in a slide-exploration system. Respond with a single JSON "
                   "object only.",
                   {}});
  turns.push_back({"user", prompt, {}});
  std::string content = complete(turns, EventKind::Plan);
  std::size_t start = content.find('{');
  std::size_t end = content.rfind('}');
  if (start == std::string::npos || end == std::string::npos) {
    return json(content);  // schema validation upstream triggers the repair path
  }
  try {
    return json::parse(content.substr(start, end - start + 1));
  } catch (const json::exception&) {
    return json(content);
  }
}

}  // namespace slideseek

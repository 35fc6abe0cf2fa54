#pragma once

#include "slideseek/anyres.hpp"
#include "slideseek/backend.hpp"
#include "slideseek/trace.hpp"

#include <condition_variable>
#include <mutex>

namespace slideseek {

/// One chat message; images appear only on user turns and are serialized in
/// TileSequence order with newline markers between consecutive images.
struct ChatTurn {
  std::string role;  // system | user | assistant
  std::string text;
  std::vector<std::pair<RasterImage, GridPlan>> images;
};

std::string base64_encode(const std::uint8_t* data, std::size_t size);

/// Chat-completions request body. Besides the standard messages array it
/// carries an `image_token_plan` block: per-image token counts, the number of
/// newline boundary markers, and the serialized placeholder sequence.
nlohmann::json build_chat_request(const std::vector<ChatTurn>& turns, const BackendConfig& config);

/// Chat-completions client over HTTP with bounded concurrency, retries with
/// exponential backoff, and trace logging (request/response with images
/// elided by digest).
class HttpChatBackend final : public CaptionerBackend, public DecisionBackend {
 public:
  explicit HttpChatBackend(BackendConfig config, TraceWriter* trace = nullptr);

  std::string caption_region(const RasterImage& image, const RegionSpec& region,
                             const std::string& prompt) override;
  Differential differential_diagnosis(std::span<const ROIRecord> rois,
                                      std::span<const RasterImage> images,
                                      const std::string& context) override;
  nlohmann::json decide(const std::string& prompt) override;

 private:
  std::string complete(const std::vector<ChatTurn>& turns, EventKind log_kind);

  BackendConfig config_;
  TraceWriter* trace_;
  std::mutex mutex_;
  std::condition_variable slots_cv_;
  int in_flight_ = 0;
};

}  // namespace slideseek

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "offrl/render.hpp"

namespace offrl::vlm {

// --- image encoding ------------------------------------------------------------

std::uint32_t crc32(std::span<const std::uint8_t> bytes);
std::uint32_t adler32(std::span<const std::uint8_t> bytes);

/// 8-bit truecolor PNG whose zlib stream uses stored (uncompressed) deflate
/// blocks; output bytes are a pure function of the pixels.
std::vector<std::uint8_t> encodePng(const Image& image);

std::string base64Encode(std::span<const std::uint8_t> bytes);

// --- chat-completion wire types ------------------------------------------------

struct ContentPart {
  enum class Kind { Text, Image };
  Kind kind = Kind::Text;
  std::string text;
  std::vector<std::uint8_t> png;

  static ContentPart makeText(std::string t) { return {Kind::Text, std::move(t), {}}; }
  static ContentPart makeImage(std::vector<std::uint8_t> png) { return {Kind::Image, {}, std::move(png)}; }
};

struct ChatMessage {
  std::string role = "user";
  std::vector<ContentPart> content;
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  int imageCount() const;
};

struct ChatResponse {
  std::string text;
  int status = 0;
  int attempts = 0;
  bool from_cache = false;
  std::vector<std::string> attempt_log;
};

struct VlmClientConfig {
  std::string endpoint = "http://127.0.0.1:8080/v1/chat/completions";
  std::string model = "generic-vlm";
  /// Name of the environment variable holding the bearer token.
  std::string api_key_env = "OFFRL_VLMF_API_KEY";
  double timeout_s = 60.0;
  int max_retries = 3;
  int max_in_flight = 4;
  std::filesystem::path cache_dir = "vlm_cache";
  double temperature = 0.0;
  double backoff_base_s = 1.0;
  double backoff_factor = 2.0;
  bool verbose = false;

  void validate() const;
};

/// JSON body sent to the endpoint; images become base64 data URLs.
std::string buildRequestBody(const VlmClientConfig& cfg, const ChatRequest& req);
/// Same body with image payloads replaced by a size marker (for logs).
std::string redactedRequestBody(const VlmClientConfig& cfg, const ChatRequest& req);
/// Extracts choices[0].message.content from a response body.
std::string extractResponseText(const std::string& body);

/// Content digest of (model, prompt text, image bytes) in message order.
std::string cacheKey(const VlmClientConfig& cfg, const ChatRequest& req);

/// Thread-safe client. At most cfg.max_in_flight HTTP requests exist at once.
class VlmClient {
 public:
  explicit VlmClient(VlmClientConfig cfg);
  ~VlmClient();
  VlmClient(const VlmClient&) = delete;
  VlmClient& operator=(const VlmClient&) = delete;

  /// Network call with retry and exponential backoff. Throws TransportError
  /// once retries are exhausted and NonRetryableError on 4xx (except 429).
  ChatResponse chatComplete(const ChatRequest& req) const;

  /// Serves from the on-disk cache when possible; otherwise calls
  /// chatComplete and persists the answer atomically.
  ChatResponse cachedQuery(const std::string& key, const ChatRequest& req) const;
  ChatResponse query(const ChatRequest& req) const { return cachedQuery(cacheKey(cfg_, req), req); }

  /// Replaces a cache entry (used after re-asking for an unparseable answer).
  void storeCached(const std::string& key, const std::string& text) const;

  const VlmClientConfig& config() const { return cfg_; }

 private:
  struct Impl;
  VlmClientConfig cfg_;
  std::unique_ptr<Impl> impl_;
};

}  // namespace offrl::vlm

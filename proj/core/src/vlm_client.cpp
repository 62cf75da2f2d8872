#include "offrl/vlm_client.hpp"

#include <chrono>
#include <cstdlib>
#include <mutex>
#include <random>
#include <semaphore>
#include <thread>
#include <unordered_map>

#include <httplib.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "offrl/digest.hpp"
#include "offrl/error.hpp"

namespace offrl::vlm {

namespace fs = std::filesystem;
using nlohmann::json;

int ChatRequest::imageCount() const {
  int n = 0;
  for (const auto& m : messages) {
    for (const auto& p : m.content) n += p.kind == ContentPart::Kind::Image ? 1 : 0;
  }
  return n;
}

void VlmClientConfig::validate() const {
  if (max_retries < 0) throw ConfigError("vlm: max_retries must be >= 0");
  if (max_in_flight < 1) throw ConfigError("vlm: max_in_flight must be >= 1");
  if (timeout_s <= 0.0) throw ConfigError("vlm: timeout must be positive");
  if (endpoint.rfind("http://", 0) != 0 && endpoint.rfind("https://", 0) != 0) {
    throw ConfigError("vlm: endpoint must be an http(s) URL");
  }
}

namespace {

json buildBody(const VlmClientConfig& cfg, const ChatRequest& req, bool redact) {
  json messages = json::array();
  for (const auto& m : req.messages) {
    json parts = json::array();
    for (const auto& p : m.content) {
      if (p.kind == ContentPart::Kind::Text) {
        parts.push_back({{"type", "text"}, {"text", p.text}});
      } else {
        const std::string url = redact ? "data:image/png;base64,<" + std::to_string(p.png.size()) + " bytes elided>"
                                       : "data:image/png;base64," + base64Encode(p.png);
        parts.push_back({{"type", "image_url"}, {"image_url", {{"url", url}}}});
      }
    }
    messages.push_back({{"role", m.role}, {"content", parts}});
  }
  return {{"model", cfg.model}, {"temperature", cfg.temperature}, {"messages", messages}};
}

struct Endpoint {
  std::string scheme_host_port;
  std::string path;
};

Endpoint splitEndpoint(const std::string& url) {
  const auto scheme_end = url.find("://");
  const auto path_start = url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

class InFlightSlot {
 public:
  explicit InFlightSlot(std::counting_semaphore<>& sem) : sem_(sem) { sem_.acquire(); }
  ~InFlightSlot() { sem_.release(); }
  InFlightSlot(const InFlightSlot&) = delete;
  InFlightSlot& operator=(const InFlightSlot&) = delete;

 private:
  std::counting_semaphore<>& sem_;
};

bool retryableStatus(int status) { return status == 429 || status >= 500; }

}  // namespace

std::string buildRequestBody(const VlmClientConfig& cfg, const ChatRequest& req) {
  return buildBody(cfg, req, false).dump();
}

std::string redactedRequestBody(const VlmClientConfig& cfg, const ChatRequest& req) {
  return buildBody(cfg, req, true).dump();
}

std::string extractResponseText(const std::string& body) {
  try {
    const json j = json::parse(body);
    const json& content = j.at("choices").at(0).at("message").at("content");
    if (content.is_string()) return content.get<std::string>();
    std::string text;
    for (const auto& part : content) {
      if (part.value("type", std::string()) == "text") text += part.at("text").get<std::string>();
    }
    return text;
  } catch (const json::exception& e) {
    throw ParseError("chat-completion response is malformed: " + std::string(e.what()));
  }
}

std::string cacheKey(const VlmClientConfig& cfg, const ChatRequest& req) {
  Sha256 h;
  h.field(std::string_view("offrl-vlm-cache-v1"));
  h.field(cfg.model);
  for (const auto& m : req.messages) {
    h.field(m.role);
    for (const auto& p : m.content) {
      if (p.kind == ContentPart::Kind::Text) {
        h.field(std::string_view("text"));
        h.field(p.text);
      } else {
        h.field(std::string_view("image/png"));
        h.field(p.png);
      }
    }
  }
  return h.hex();
}

struct VlmClient::Impl {
  explicit Impl(int max_in_flight) : in_flight(max_in_flight) {}

  std::counting_semaphore<> in_flight;
  std::mutex lock_table_mutex;
  std::unordered_map<std::string, std::shared_ptr<std::mutex>> key_locks;

  std::shared_ptr<std::mutex> lockFor(const std::string& key) {
    std::lock_guard<std::mutex> g(lock_table_mutex);
    auto& slot = key_locks[key];
    if (!slot) slot = std::make_shared<std::mutex>();
    return slot;
  }
};

VlmClient::VlmClient(VlmClientConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  impl_ = std::make_unique<Impl>(cfg_.max_in_flight);
}

VlmClient::~VlmClient() = default;

ChatResponse VlmClient::chatComplete(const ChatRequest& req) const {
  if (req.imageCount() > 2) throw ContractError("chat request carries more than two images");
  const Endpoint ep = splitEndpoint(cfg_.endpoint);
  const std::string body = buildRequestBody(cfg_, req);
  if (cfg_.verbose) spdlog::info("vlm request {}", redactedRequestBody(cfg_, req));

  httplib::Headers headers;
  if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key != nullptr && *key != '\0') {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  std::mt19937_64 jitter_rng(std::random_device{}());
  ChatResponse resp;
  const int attempts = 1 + cfg_.max_retries;
  for (int attempt = 0; attempt < attempts; ++attempt) {
    if (attempt > 0) {
      double delay = cfg_.backoff_base_s;
      for (int k = 1; k < attempt; ++k) delay *= cfg_.backoff_factor;
      delay *= 1.0 + 0.25 * std::uniform_real_distribution<double>(0.0, 1.0)(jitter_rng);
      std::this_thread::sleep_for(std::chrono::duration<double>(delay));
    }
    resp.attempts = attempt + 1;

    httplib::Result result{nullptr, httplib::Error::Unknown};
    {
      InFlightSlot slot(impl_->in_flight);
      httplib::Client cli(ep.scheme_host_port);
      const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
          std::chrono::duration<double>(cfg_.timeout_s));
      cli.set_connection_timeout(timeout);
      cli.set_read_timeout(timeout);
      cli.set_write_timeout(timeout);
      result = cli.Post(ep.path, headers, body, "application/json");
    }

    if (!result) {
      resp.attempt_log.push_back("attempt " + std::to_string(attempt + 1) + ": " + httplib::to_string(result.error()));
      continue;
    }
    resp.status = result->status;
    if (result->status >= 200 && result->status < 300) {
      resp.text = extractResponseText(result->body);
      if (cfg_.verbose) spdlog::info("vlm response {}", result->body);
      resp.attempt_log.push_back("attempt " + std::to_string(attempt + 1) + ": HTTP " +
                                 std::to_string(result->status));
      return resp;
    }
    resp.attempt_log.push_back("attempt " + std::to_string(attempt + 1) + ": HTTP " + std::to_string(result->status));
    if (!retryableStatus(result->status)) {
      throw NonRetryableError(result->status, "vlm endpoint returned HTTP " + std::to_string(result->status) + ": " +
                                                  result->body.substr(0, 200));
    }
  }
  std::string log;
  for (const auto& line : resp.attempt_log) log += "\n  " + line;
  throw TransportError("vlm request failed after " + std::to_string(attempts) + " attempts:" + log);
}

ChatResponse VlmClient::cachedQuery(const std::string& key, const ChatRequest& req) const {
  const fs::path file = cfg_.cache_dir / (key + ".json");
  auto lock = impl_->lockFor(key);
  std::lock_guard<std::mutex> g(*lock);
  if (fs::exists(file)) {
    try {
      const json entry = json::parse(readFileText(file));
      if (entry.at("key").get<std::string>() != key) throw ParseError("cache key mismatch");
      ChatResponse resp;
      resp.text = entry.at("text").get<std::string>();
      resp.status = 200;
      resp.from_cache = true;
      return resp;
    } catch (const std::exception& e) {
      spdlog::warn("discarding corrupt vlm cache entry {}: {}", file.string(), e.what());
      std::error_code ec;
      fs::remove(file, ec);
    }
  }
  ChatResponse resp = chatComplete(req);
  storeCached(key, resp.text);
  return resp;
}

void VlmClient::storeCached(const std::string& key, const std::string& text) const {
  fs::create_directories(cfg_.cache_dir);
  const json entry = {{"key", key}, {"model", cfg_.model}, {"text", text}};
  const auto tid = std::hash<std::thread::id>{}(std::this_thread::get_id());
  const fs::path tmp = cfg_.cache_dir / (key + ".json.tmp." + std::to_string(tid));
  writeFileText(tmp, entry.dump());
  fs::rename(tmp, cfg_.cache_dir / (key + ".json"));
}

}  // namespace offrl::vlm

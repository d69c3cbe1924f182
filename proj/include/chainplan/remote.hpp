#pragma once

// HTTP-backed model and embedding clients speaking the OpenAI-compatible
// wire shape. Kept apart from llm_client.hpp so offline users never pull in
// the HTTP stack.

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <memory>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "chainplan/llm_client.hpp"
#include "chainplan/retriever.hpp"

namespace chainplan {

class TransportError : public ModelError {
 public:
  using ModelError::ModelError;
};

struct HttpResponse {
  int status = 0;
  std::string body;
};

using Headers = std::vector<std::pair<std::string, std::string>>;

class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  // Throws TransportError when no response was received at all.
  virtual HttpResponse post(const std::string& base_url, const std::string& path, const std::string& body,
                            const Headers& headers, std::chrono::seconds timeout) = 0;
};

class HttplibTransport final : public HttpTransport {
 public:
  HttpResponse post(const std::string& base_url, const std::string& path, const std::string& body,
                    const Headers& headers, std::chrono::seconds timeout) override {
    auto [origin, prefix] = split_base(base_url);
    httplib::Client client(origin);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    httplib::Headers h;
    for (const auto& [k, v] : headers) h.emplace(k, v);
    auto res = client.Post(prefix + path, h, body, "application/json");
    if (!res) throw TransportError("HTTP request to " + base_url + path + " failed: " + httplib::to_string(res.error()));
    return {res->status, res->body};
  }

  // "http://host:8000/api" -> {"http://host:8000", "/api"}
  static std::pair<std::string, std::string> split_base(const std::string& base) {
    auto scheme = base.find("://");
    std::size_t host_start = scheme == std::string::npos ? 0 : scheme + 3;
    auto slash = base.find('/', host_start);
    if (slash == std::string::npos) return {base, ""};
    std::string prefix = base.substr(slash);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {base.substr(0, slash), prefix};
  }
};

// Refuses every connection. Used to prove offline code paths stay offline.
class FailingTransport final : public HttpTransport {
 public:
  HttpResponse post(const std::string& base_url, const std::string& path, const std::string&, const Headers&,
                    std::chrono::seconds) override {
    ++attempts_;
    throw TransportError("network access is disabled (attempted " + base_url + path + ")");
  }
  std::size_t attempts() const { return attempts_.load(); }

 private:
  std::atomic<std::size_t> attempts_{0};
};

struct RemoteConfig {
  std::string base_url = "https://api.openai.com";
  std::string api_key;
  std::string model = "gpt-3.5-turbo-1106";
  std::string embedding_model = "text-embedding-ada-002";
  std::size_t embedding_dimension = 1536;
  std::chrono::seconds timeout{60};

  // CHAINPLAN_API_BASE, CHAINPLAN_API_KEY, CHAINPLAN_MODEL,
  // CHAINPLAN_EMBEDDING_MODEL, CHAINPLAN_EMBEDDING_DIM, CHAINPLAN_TIMEOUT;
  // OPENAI_BASE_URL / OPENAI_API_KEY are honored as fallbacks.
  static RemoteConfig from_env() {
    auto env = [](const char* name) -> std::string {
      const char* v = std::getenv(name);
      return v ? std::string(v) : std::string();
    };
    RemoteConfig c;
    if (auto v = env("CHAINPLAN_API_BASE"); !v.empty()) {
      c.base_url = v;
    } else if (auto o = env("OPENAI_BASE_URL"); !o.empty()) {
      c.base_url = o;
    }
    c.api_key = env("CHAINPLAN_API_KEY");
    if (c.api_key.empty()) c.api_key = env("OPENAI_API_KEY");
    if (auto v = env("CHAINPLAN_MODEL"); !v.empty()) c.model = v;
    if (auto v = env("CHAINPLAN_EMBEDDING_MODEL"); !v.empty()) c.embedding_model = v;
    if (auto v = env("CHAINPLAN_EMBEDDING_DIM"); !v.empty()) c.embedding_dimension = std::stoul(v);
    if (auto v = env("CHAINPLAN_TIMEOUT"); !v.empty()) c.timeout = std::chrono::seconds(std::stol(v));
    return c;
  }
};

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{500};
  double multiplier = 2.0;
};

namespace detail {

inline std::string endpoint_path(const std::string& base_url, const std::string& tail) {
  auto [_, prefix] = HttplibTransport::split_base(base_url);
  bool has_v1 = prefix.size() >= 3 && prefix.compare(prefix.size() - 3, 3, "/v1") == 0;
  return (has_v1 ? "" : "/v1") + tail;
}

// POST with bounded exponential backoff on transport failures, 429 and 5xx.
inline nlohmann::json post_json_with_retry(HttpTransport& transport, const RemoteConfig& cfg, const std::string& tail,
                                           const nlohmann::json& body, const RetryPolicy& retry) {
  Headers headers;
  if (!cfg.api_key.empty()) headers.emplace_back("Authorization", "Bearer " + cfg.api_key);
  std::string path = endpoint_path(cfg.base_url, tail);
  std::string payload = body.dump();
  auto backoff = retry.initial_backoff;
  std::string last_error;
  for (int attempt = 1; attempt <= retry.attempts; ++attempt) {
    try {
      HttpResponse res = transport.post(cfg.base_url, path, payload, headers, cfg.timeout);
      if (res.status >= 200 && res.status < 300) {
        try {
          return nlohmann::json::parse(res.body);
        } catch (const nlohmann::json::exception& e) {
          throw ModelError(std::string("malformed response body: ") + e.what());
        }
      }
      last_error = "HTTP " + std::to_string(res.status) + ": " + res.body.substr(0, 200);
      if (res.status != 429 && res.status < 500) throw ModelError(last_error);
    } catch (const TransportError& e) {
      last_error = e.what();
    }
    if (attempt < retry.attempts) {
      std::this_thread::sleep_for(backoff);
      backoff = std::chrono::milliseconds(static_cast<long long>(static_cast<double>(backoff.count()) * retry.multiplier));
    }
  }
  throw TransportError("request failed after " + std::to_string(retry.attempts) + " attempts: " + last_error);
}

}  // namespace detail

// Chat model behind POST /v1/chat/completions.
class RemoteChatModel final : public LanguageModel {
 public:
  RemoteChatModel(RemoteConfig config, std::shared_ptr<HttpTransport> transport, RetryPolicy retry = {})
      : config_(std::move(config)), transport_(std::move(transport)), retry_(retry) {}

  const RemoteConfig& config() const { return config_; }

 protected:
  CompletionResult do_complete(const CompletionRequest& request) override {
    nlohmann::json messages = nlohmann::json::array();
    if (!request.system.empty()) messages.push_back({{"role", "system"}, {"content", request.system}});
    messages.push_back({{"role", "user"}, {"content", request.prompt}});
    nlohmann::json body = {{"model", request.model.empty() ? config_.model : request.model},
                           {"messages", std::move(messages)},
                           {"max_tokens", request.max_tokens},
                           {"temperature", request.temperature}};
    auto j = detail::post_json_with_retry(*transport_, config_, "/chat/completions", body, retry_);
    CompletionResult r;
    try {
      r.text = j.at("choices").at(0).at("message").at("content").get<std::string>();
      if (auto u = j.find("usage"); u != j.end() && u->is_object()) {
        r.prompt_tokens = u->value("prompt_tokens", std::size_t{0});
        r.completion_tokens = u->value("completion_tokens", std::size_t{0});
      }
    } catch (const nlohmann::json::exception& e) {
      throw ModelError(std::string("unexpected chat completion response: ") + e.what());
    }
    return r;
  }

 private:
  RemoteConfig config_;
  std::shared_ptr<HttpTransport> transport_;
  RetryPolicy retry_;
};

// Embeddings behind POST /v1/embeddings.
class RemoteEmbeddingProvider final : public EmbeddingProvider {
 public:
  RemoteEmbeddingProvider(RemoteConfig config, std::shared_ptr<HttpTransport> transport, RetryPolicy retry = {})
      : config_(std::move(config)), transport_(std::move(transport)), retry_(retry) {}

  EmbeddingVector embed(std::string_view text) const override {
    nlohmann::json body = {{"model", config_.embedding_model}, {"input", std::string(text)}};
    auto j = detail::post_json_with_retry(*transport_, config_, "/embeddings", body, retry_);
    EmbeddingVector v;
    try {
      v.values = j.at("data").at(0).at("embedding").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
      throw ModelError(std::string("unexpected embeddings response: ") + e.what());
    }
    return v;
  }

  std::size_t dimension() const override { return config_.embedding_dimension; }
  std::string id() const override { return "remote:" + config_.embedding_model; }

 private:
  RemoteConfig config_;
  std::shared_ptr<HttpTransport> transport_;
  RetryPolicy retry_;
};

}  // namespace chainplan

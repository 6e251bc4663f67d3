#pragma once

#include <atomic>
#include <string>
#include <vector>

#include <json.hpp>

namespace tagcc {

struct RetryPolicy {
  int attempts = 3;
  int backoff_ms = 1000;  // doubles after each failed attempt
};

struct ClientConfig {
  std::string url;      // full endpoint URL, e.g. http://host:8080/v1/chat/completions
  std::string model;
  std::string api_key;  // sent as a bearer token when non-empty
  int max_concurrency = 4;
  RetryPolicy retry;
  int timeout_s = 120;
};

// Reads TAGCC_LLM_URL / TAGCC_LLM_MODEL / TAGCC_LLM_KEY.
ClientConfig chat_config_from_env();
// Reads TAGCC_EMB_URL / TAGCC_EMB_MODEL / TAGCC_EMB_KEY.
ClientConfig embedding_config_from_env();

// POSTs a JSON body, retrying on transport errors and non-2xx statuses.
// Throws TransportError once the policy is exhausted.
nlohmann::json post_json_with_retry(const ClientConfig& config,
                                    const nlohmann::json& body,
                                    std::atomic<int>* request_counter);

// Chat-completions client. Requests are sent at temperature 0.
class ChatClient {
 public:
  explicit ChatClient(ClientConfig config) : config_(std::move(config)) {}

  std::string complete(const std::string& system_msg, const std::string& user_msg);
  int request_count() const { return count_.load(); }
  const ClientConfig& config() const { return config_; }

 private:
  ClientConfig config_;
  std::atomic<int> count_{0};
};

// Embeddings client; one request per batch of inputs.
class EmbeddingClient {
 public:
  explicit EmbeddingClient(ClientConfig config) : config_(std::move(config)) {}

  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts);
  const std::string& provider_id() const { return provider_id_; }
  int request_count() const { return count_.load(); }
  const ClientConfig& config() const { return config_; }

 private:
  ClientConfig config_;
  std::string provider_id_;
  std::atomic<int> count_{0};
};

}  // namespace tagcc

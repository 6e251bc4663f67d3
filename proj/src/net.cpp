#include "tagcc/net.hpp"

#include <chrono>
#include <thread>

#include <httplib.h>

#include "tagcc/common.hpp"

namespace tagcc {

namespace {

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;    // /v1/...
};

ParsedUrl parse_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw ValidationError("URL must start with http:// or https://, got '" + url + "'");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl out;
  if (path_start == std::string::npos) {
    out.origin = url;
    out.path = "/";
  } else {
    out.origin = url.substr(0, path_start);
    out.path = url.substr(path_start);
  }
  return out;
}

}  // namespace

ClientConfig chat_config_from_env() {
  ClientConfig cfg;
  cfg.url = getenv_or("TAGCC_LLM_URL");
  cfg.model = getenv_or("TAGCC_LLM_MODEL");
  cfg.api_key = getenv_or("TAGCC_LLM_KEY");
  return cfg;
}

ClientConfig embedding_config_from_env() {
  ClientConfig cfg;
  cfg.url = getenv_or("TAGCC_EMB_URL");
  cfg.model = getenv_or("TAGCC_EMB_MODEL");
  cfg.api_key = getenv_or("TAGCC_EMB_KEY");
  return cfg;
}

nlohmann::json post_json_with_retry(const ClientConfig& config,
                                    const nlohmann::json& body,
                                    std::atomic<int>* request_counter) {
  if (config.url.empty()) throw ValidationError("endpoint URL is not configured");
  const ParsedUrl url = parse_url(config.url);
  const std::string payload = body.dump();

  httplib::Headers headers;
  if (!config.api_key.empty()) {
    headers.emplace("Authorization", "Bearer " + config.api_key);
  }

  std::string last_error;
  int backoff_ms = config.retry.backoff_ms;
  for (int attempt = 0; attempt < config.retry.attempts; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
      backoff_ms *= 2;
    }
    httplib::Client client(url.origin);
    client.set_connection_timeout(10, 0);
    client.set_read_timeout(config.timeout_s, 0);
    client.set_write_timeout(config.timeout_s, 0);

    if (request_counter) request_counter->fetch_add(1);
    httplib::Result res = client.Post(url.path, headers, payload, "application/json");
    if (!res) {
      last_error = "transport: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      last_error = "HTTP " + std::to_string(res->status) + ": " +
                   res->body.substr(0, 200);
      continue;
    }
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      last_error = std::string("bad JSON response: ") + e.what();
    }
  }
  throw TransportError("request to " + config.url + " failed after " +
                       std::to_string(config.retry.attempts) + " attempts; last: " +
                       last_error);
}

std::string ChatClient::complete(const std::string& system_msg,
                                 const std::string& user_msg) {
  nlohmann::json body = {
      {"model", config_.model},
      {"temperature", 0},
      {"messages",
       {{{"role", "system"}, {"content", system_msg}},
        {{"role", "user"}, {"content", user_msg}}}},
  };
  const nlohmann::json res = post_json_with_retry(config_, body, &count_);
  std::string text;
  try {
    text = res.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw TransportError("chat response missing choices[0].message.content: " +
                         std::string(e.what()));
  }
  if (text.empty()) throw TransportError("chat endpoint returned an empty message");
  return text;
}

std::vector<std::vector<double>> EmbeddingClient::embed(
    const std::vector<std::string>& texts) {
  nlohmann::json body = {{"model", config_.model}, {"input", texts}};
  const nlohmann::json res = post_json_with_retry(config_, body, &count_);
  if (provider_id_.empty()) {
    provider_id_ = res.value("model", config_.model);
  }
  std::vector<std::vector<double>> out(texts.size());
  try {
    for (const auto& item : res.at("data")) {
      const std::size_t idx = item.at("index").get<std::size_t>();
      if (idx >= out.size()) throw TransportError("embedding index out of range");
      out[idx] = item.at("embedding").get<std::vector<double>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw TransportError("embedding response malformed: " + std::string(e.what()));
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i].empty()) {
      throw TransportError("embedding response missing vector for input " +
                           std::to_string(i));
    }
  }
  return out;
}

}  // namespace tagcc

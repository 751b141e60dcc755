#include "qfmts/llm_gateway.hpp"

#include <spdlog/spdlog.h>

#include <cstdlib>
#include <ctime>
#include <fstream>
#include <thread>

#include "httplib.h"

namespace qfmts {

namespace {

std::string env_or(const char* primary, const char* fallback, std::string def = {}) {
  if (const char* v = std::getenv(primary); v && *v) return v;
  if (const char* v = std::getenv(fallback); v && *v) return v;
  return def;
}

std::string excerpt(std::string_view body, std::size_t limit = 200) {
  if (body.size() <= limit) return std::string(body);
  return std::string(body.substr(0, limit)) + "...";
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

void GenerationParams::validate() const {
  if (temperature < 0.0) throw Error("temperature must be >= 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw Error("top_p must lie in (0, 1]");
  if (max_output_tokens <= 0) throw Error("max_output_tokens must be > 0");
}

void to_json(nlohmann::json& j, const GenerationParams& params) {
  j = nlohmann::json{{"model", params.model_name},
                     {"temperature", params.temperature},
                     {"top_p", params.top_p},
                     {"max_tokens", params.max_output_tokens}};
}

nlohmann::json build_chat_request(const PromptBundle& prompt, const GenerationParams& params) {
  nlohmann::json body = params;
  body["messages"] = nlohmann::json::array({{{"role", "user"}, {"content", prompt.text}}});
  return body;
}

std::string parse_chat_response(std::string_view body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
    const auto& content = j.at("choices").at(0).at("message").at("content");
    if (!content.is_string()) throw Error("message content is not a string");
    return content.get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed chat completion response: ") + e.what());
  }
}

EndpointConfig EndpointConfig::from_env() {
  EndpointConfig cfg;
  cfg.base_url = env_or("QFMTS_BASE_URL", "OPENAI_BASE_URL", cfg.base_url);
  cfg.api_key = env_or("QFMTS_API_KEY", "OPENAI_API_KEY");
  return cfg;
}

OpenAiBackend::OpenAiBackend(EndpointConfig config) : config_(std::move(config)) {
  const auto scheme_end = config_.base_url.find("://");
  if (scheme_end == std::string::npos) throw Error("endpoint URL needs a scheme: " + config_.base_url);
  const auto path_start = config_.base_url.find('/', scheme_end + 3);
  origin_ = config_.base_url.substr(0, path_start);
  path_ = path_start == std::string::npos ? std::string{} : config_.base_url.substr(path_start);
  while (!path_.empty() && path_.back() == '/') path_.pop_back();
  if (!path_.ends_with("/chat/completions")) path_ += "/chat/completions";
}

std::string OpenAiBackend::id() const { return origin_ + path_; }

BackendReply OpenAiBackend::send(const PromptBundle& prompt, const GenerationParams& params) {
  httplib::Client client(origin_);
  client.set_connection_timeout(config_.timeout);
  client.set_read_timeout(config_.timeout);
  client.set_write_timeout(config_.timeout);
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

  const auto body = build_chat_request(prompt, params).dump();
  auto res = client.Post(path_, headers, body, "application/json");
  BackendReply reply;
  if (!res) {
    reply.status = BackendReply::Status::transient;
    reply.detail = "transport error: " + httplib::to_string(res.error());
    return reply;
  }
  reply.http_status = res->status;
  if (res->status >= 200 && res->status < 300) {
    try {
      reply.text = parse_chat_response(res->body);
    } catch (const Error& e) {
      reply.status = BackendReply::Status::rejected;
      reply.detail = e.what();
    }
    return reply;
  }
  reply.detail = "HTTP " + std::to_string(res->status) + ": " + excerpt(res->body);
  reply.status = (res->status == 429 || res->status >= 500) ? BackendReply::Status::transient
                                                            : BackendReply::Status::rejected;
  return reply;
}

std::unique_ptr<MockBackend> MockBackend::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open mock responses " + path.string());
  auto mock = std::make_unique<MockBackend>();
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto j = nlohmann::json::parse(line);
    if (j.contains("default")) {
      mock->set_default(j.at("default").get<std::string>());
    } else {
      mock->add(j.at("prompt_sha256").get<std::string>(), j.at("text").get<std::string>());
    }
  }
  return mock;
}

void MockBackend::add(std::string prompt_sha256, std::string text) {
  by_hash_[std::move(prompt_sha256)] = std::move(text);
}

void MockBackend::add_for_prompt(std::string_view prompt_text, std::string text) {
  add(prompt_sha256(prompt_text), std::move(text));
}

void MockBackend::set_default(std::string text) { default_ = std::move(text); }

void MockBackend::set_responder(Responder responder) { responder_ = std::move(responder); }

BackendReply MockBackend::send(const PromptBundle& prompt, const GenerationParams&) {
  const auto hash = prompt_sha256(prompt.text);
  {
    std::lock_guard lock(mutex_);
    seen_.push_back(prompt.text);
  }
  BackendReply reply;
  reply.http_status = 200;
  if (auto it = by_hash_.find(hash); it != by_hash_.end()) {
    reply.text = it->second;
  } else if (auto answer = responder_ ? responder_(prompt) : std::nullopt) {
    reply.text = std::move(*answer);
  } else if (default_) {
    reply.text = *default_;
  } else {
    reply.status = BackendReply::Status::rejected;
    reply.http_status = 404;
    reply.detail = "mock has no response for prompt " + hash;
  }
  return reply;
}

std::size_t MockBackend::call_count() const {
  std::lock_guard lock(mutex_);
  return seen_.size();
}

std::vector<std::string> MockBackend::prompts_seen() const {
  std::lock_guard lock(mutex_);
  return seen_;
}

Gateway::Gateway(std::unique_ptr<Backend> backend, GatewayOptions options)
    : backend_(std::move(backend)),
      options_(std::move(options)),
      in_flight_(std::max(1, options_.max_in_flight)) {
  if (!backend_) throw Error("gateway needs a backend");
}

GatewayResponse Gateway::complete(const PromptBundle& prompt, const GenerationParams& params) {
  params.validate();
  const auto start = std::chrono::steady_clock::now();
  std::string last_detail;
  for (int attempt = 0; attempt <= options_.retry.max_retries; ++attempt) {
    if (attempt > 0) {
      const auto& backoff = options_.retry.backoff;
      if (!backoff.empty()) {
        std::this_thread::sleep_for(backoff[std::min<std::size_t>(attempt - 1, backoff.size() - 1)]);
      }
    }
    in_flight_.acquire();
    BackendReply reply;
    try {
      reply = backend_->send(prompt, params);
    } catch (...) {
      in_flight_.release();
      throw;
    }
    in_flight_.release();

    if (reply.status == BackendReply::Status::ok) {
      GatewayResponse response;
      response.text = std::move(reply.text);
      response.backend_id = backend_->id();
      response.retry_count = attempt;
      response.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                std::chrono::steady_clock::now() - start)
                                .count();
      spdlog::debug("completion ok backend={} retry_count={} latency_ms={}", response.backend_id,
                    response.retry_count, response.latency_ms);
      if (attempt > 0) spdlog::info("completion succeeded after retry_count={}", attempt);
      audit(prompt, params, &response, attempt, "ok");
      return response;
    }
    if (reply.status == BackendReply::Status::rejected) {
      audit(prompt, params, nullptr, attempt, "rejected");
      throw GatewayError(GatewayError::Kind::rejected, "request rejected: " + reply.detail);
    }
    last_detail = reply.detail;
    spdlog::warn("transient backend failure (attempt {}): {}", attempt + 1, reply.detail);
  }
  audit(prompt, params, nullptr, options_.retry.max_retries, "unavailable");
  throw GatewayError(GatewayError::Kind::unavailable, "backend unavailable: " + last_detail);
}

void Gateway::audit(const PromptBundle& prompt, const GenerationParams& params,
                    const GatewayResponse* response, int retries, std::string_view outcome) {
  if (!options_.audit_log) return;
  nlohmann::json entry{{"time", utc_timestamp()},
                       {"backend", backend_->id()},
                       {"template", prompt.template_name},
                       {"prompt_sha256", prompt_sha256(prompt.text)},
                       {"params", params},
                       {"outcome", outcome},
                       {"retry_count", retries},
                       {"response_length", response ? response->text.size() : 0},
                       {"latency_ms", response ? response->latency_ms : 0}};
  std::lock_guard lock(audit_mutex_);
  std::ofstream out(*options_.audit_log, std::ios::app);
  out << entry.dump() << '\n';
}

std::unique_ptr<Backend> make_backend(std::string_view endpoint) {
  if (endpoint.starts_with("mock:")) return MockBackend::from_file(std::string(endpoint.substr(5)));
  auto cfg = EndpointConfig::from_env();
  if (endpoint != "env" && !endpoint.empty()) cfg.base_url = std::string(endpoint);
  return std::make_unique<OpenAiBackend>(std::move(cfg));
}

}  // namespace qfmts

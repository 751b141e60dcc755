#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "qfmts/error.hpp"
#include "qfmts/prompt.hpp"

namespace qfmts {

/// Sampling parameters. The defaults are the few-shot prompting settings:
/// temperature 0.1, top-p 0.95, at most 400 output tokens.
struct GenerationParams {
  double temperature = 0.1;
  double top_p = 0.95;
  int max_output_tokens = 400;
  std::string model_name = "gpt-3.5-turbo-0613";

  /// Throws qfmts::Error when temperature < 0, top_p outside (0, 1] or
  /// max_output_tokens <= 0.
  void validate() const;
};

void to_json(nlohmann::json& j, const GenerationParams& params);

struct GatewayResponse {
  std::string text;
  std::int64_t latency_ms = 0;
  std::string backend_id;
  int retry_count = 0;
};

class GatewayError : public Error {
 public:
  enum class Kind { unavailable, rejected };
  GatewayError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Outcome of a single attempt against a backend.
struct BackendReply {
  enum class Status { ok, transient, rejected };
  Status status = Status::ok;
  std::string text;
  int http_status = 0;
  std::string detail;
};

class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string id() const = 0;
  /// One attempt; must not throw for transport or HTTP failures.
  virtual BackendReply send(const PromptBundle& prompt, const GenerationParams& params) = 0;
};

/// OpenAI-compatible chat-completion request: one user message carries the
/// whole prompt.
nlohmann::json build_chat_request(const PromptBundle& prompt, const GenerationParams& params);

/// Text of the first choice. Throws qfmts::Error on an unexpected shape.
std::string parse_chat_response(std::string_view body);

struct EndpointConfig {
  /// e.g. "https://api.openai.com/v1"; "/chat/completions" is appended
  /// unless already present.
  std::string base_url = "https://api.openai.com/v1";
  std::string api_key;
  std::chrono::seconds timeout{120};

  /// QFMTS_BASE_URL / OPENAI_BASE_URL and QFMTS_API_KEY / OPENAI_API_KEY.
  static EndpointConfig from_env();
};

class OpenAiBackend final : public Backend {
 public:
  explicit OpenAiBackend(EndpointConfig config);
  std::string id() const override;
  BackendReply send(const PromptBundle& prompt, const GenerationParams& params) override;

 private:
  EndpointConfig config_;
  std::string origin_;
  std::string path_;
};

/// Deterministic backend for tests and offline runs. Responses are looked
/// up by the SHA-256 of the prompt text, then by an optional responder,
/// then by an optional default. An unmatched prompt is a rejected request.
class MockBackend final : public Backend {
 public:
  using Responder = std::function<std::optional<std::string>(const PromptBundle&)>;

  MockBackend() = default;

  /// JSON Lines: {"prompt_sha256": "...", "text": "..."} entries and at
  /// most one {"default": "..."} entry.
  static std::unique_ptr<MockBackend> from_file(const std::filesystem::path& path);

  void add(std::string prompt_sha256, std::string text);
  void add_for_prompt(std::string_view prompt_text, std::string text);
  void set_default(std::string text);
  void set_responder(Responder responder);

  std::string id() const override { return "mock"; }
  BackendReply send(const PromptBundle& prompt, const GenerationParams& params) override;

  std::size_t call_count() const;
  std::vector<std::string> prompts_seen() const;

 private:
  std::map<std::string, std::string> by_hash_;
  std::optional<std::string> default_;
  Responder responder_;
  mutable std::mutex mutex_;
  std::vector<std::string> seen_;
};

struct RetryPolicy {
  int max_retries = 3;
  std::vector<std::chrono::milliseconds> backoff{std::chrono::milliseconds(1000),
                                                 std::chrono::milliseconds(2000),
                                                 std::chrono::milliseconds(4000)};
};

struct GatewayOptions {
  RetryPolicy retry;
  int max_in_flight = 4;
  /// When set, every call appends one JSON line: prompt hash, params,
  /// response length, latency and retry count.
  std::optional<std::filesystem::path> audit_log;
};

/// Thread-safe front end over a Backend: bounds in-flight requests, retries
/// transient failures with backoff and writes the audit log.
class Gateway {
 public:
  explicit Gateway(std::unique_ptr<Backend> backend, GatewayOptions options = {});

  /// Throws GatewayError(unavailable) once retries are exhausted and
  /// GatewayError(rejected) on a non-retryable 4xx.
  GatewayResponse complete(const PromptBundle& prompt, const GenerationParams& params);

  Backend& backend() noexcept { return *backend_; }
  int max_in_flight() const noexcept { return options_.max_in_flight; }

 private:
  void audit(const PromptBundle& prompt, const GenerationParams& params,
             const GatewayResponse* response, int retries, std::string_view outcome);

  std::unique_ptr<Backend> backend_;
  GatewayOptions options_;
  std::counting_semaphore<> in_flight_;
  std::mutex audit_mutex_;
};

/// "mock:<path>" builds a MockBackend from a JSONL file; "env" uses
/// EndpointConfig::from_env(); anything else is taken as the base URL with
/// the API key from the environment.
std::unique_ptr<Backend> make_backend(std::string_view endpoint);

}  // namespace qfmts

#pragma once

// Completion providers for the LLM-backed pipeline stages.
//
// Wire contract (JSON over HTTP POST):
//   request  {"model", "messages": [{"role", "content", "image_ref"?}],
//             "temperature", "max_tokens"}
//   response {"text", "finish_reason"}

#include <atomic>
#include <chrono>
#include <cstddef>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "focusrl/jsonl.hpp"

namespace focusrl {

struct Message {
  std::string role;
  std::string content;
  std::optional<std::string> image_ref;
};

struct ProviderRequest {
  std::string model;
  std::vector<Message> messages;
  double temperature = 0.0;
  int max_tokens = 1024;

  jsonl::Json to_json() const;
  static ProviderRequest from_json(const jsonl::Json& j);
};

struct ProviderResponse {
  std::string text;
  std::string finish_reason;

  jsonl::Json to_json() const;
  static ProviderResponse from_json(const jsonl::Json& j);
};

class ProviderError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One attempt against a provider.
struct CallLog {
  std::string request_id;
  int attempt = 1;
  int status = 0;  ///< HTTP status; 0 for transport errors and the stub
  bool ok = false;
  std::string error;
  double elapsed_ms = 0.0;
};

class Provider {
 public:
  using Logger = std::function<void(const CallLog&)>;

  virtual ~Provider() = default;

  /// Throws ProviderError once retries are exhausted.
  virtual ProviderResponse complete(const ProviderRequest& req,
                                    std::string_view request_id) = 0;

  /// Called after every attempt, possibly from several threads at once.
  void set_logger(Logger logger) { logger_ = std::move(logger); }

 protected:
  void log(const CallLog& entry) const {
    if (logger_) logger_(entry);
  }

 private:
  Logger logger_;
};

/// Offline provider with canned answers. The first rule whose `match` occurs
/// in the last message wins; without a match the default text is used, or the
/// call fails when there is none.
struct StubRule {
  std::string match;
  std::string text;
  std::string finish_reason = "stop";
};

class StubProvider : public Provider {
 public:
  using FailWhen = std::function<bool(std::string_view request_id)>;

  StubProvider() = default;
  StubProvider(std::vector<StubRule> rules, std::optional<std::string> default_text);

  /// {"rules": [{"match", "text", "finish_reason"?}], "default"?: text,
  ///  "fail_ids"?: [request-id prefixes]}
  static std::unique_ptr<StubProvider> from_json(const jsonl::Json& j);

  /// Fault injection for tests.
  void fail_when(FailWhen pred) { fail_when_ = std::move(pred); }

  ProviderResponse complete(const ProviderRequest& req,
                            std::string_view request_id) override;

  std::size_t calls() const { return calls_.load(); }

 private:
  std::vector<StubRule> rules_;
  std::optional<std::string> default_text_;
  FailWhen fail_when_;
  std::atomic<std::size_t> calls_{0};
};

struct HttpProviderConfig {
  std::string url;  ///< full endpoint, e.g. http://localhost:8080/v1/complete
  std::string api_key;
  std::string model;  ///< used when a request leaves its model empty
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{500};
  std::size_t max_in_flight = 4;
  std::chrono::seconds timeout{120};

  /// Endpoint and credential from FOCUSRL_PROVIDER_URL and
  /// FOCUSRL_PROVIDER_KEY; everything else keeps its default.
  static HttpProviderConfig from_env();
  void validate() const;
};

/// Retries transport errors, 429 and 5xx with exponential backoff; other
/// statuses fail immediately.
class HttpProvider : public Provider {
 public:
  explicit HttpProvider(HttpProviderConfig cfg);

  ProviderResponse complete(const ProviderRequest& req,
                            std::string_view request_id) override;

  const HttpProviderConfig& config() const { return cfg_; }
  std::size_t peak_in_flight() const { return peak_.load(); }

 private:
  HttpProviderConfig cfg_;
  std::string base_;
  std::string path_;
  std::counting_semaphore<1024> slots_;
  std::atomic<std::size_t> in_flight_{0};
  std::atomic<std::size_t> peak_{0};
};

}  // namespace focusrl

#include "focusrl/provider.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>

#include <httplib.h>

namespace focusrl {
namespace {

using jsonl::Json;

std::string env_or_empty(const char* name) {
  const char* v = std::getenv(name);
  return v ? std::string(v) : std::string();
}

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
      .count();
}

bool retryable(int status) { return status == 429 || status >= 500; }

}  // namespace

Json ProviderRequest::to_json() const {
  Json msgs = Json::array();
  for (const auto& m : messages) {
    Json jm{{"role", m.role}, {"content", m.content}};
    if (m.image_ref) jm["image_ref"] = *m.image_ref;
    msgs.push_back(std::move(jm));
  }
  return Json{{"model", model},
              {"messages", std::move(msgs)},
              {"temperature", temperature},
              {"max_tokens", max_tokens}};
}

ProviderRequest ProviderRequest::from_json(const Json& j) {
  ProviderRequest r;
  r.model = j.value("model", "");
  r.temperature = j.value("temperature", 0.0);
  r.max_tokens = j.value("max_tokens", 1024);
  for (const auto& m : j.at("messages")) {
    Message msg{m.at("role").get<std::string>(), m.at("content").get<std::string>(),
                std::nullopt};
    if (m.contains("image_ref") && m["image_ref"].is_string()) {
      msg.image_ref = m["image_ref"].get<std::string>();
    }
    r.messages.push_back(std::move(msg));
  }
  return r;
}

Json ProviderResponse::to_json() const {
  return Json{{"text", text}, {"finish_reason", finish_reason}};
}

ProviderResponse ProviderResponse::from_json(const Json& j) {
  if (!j.is_object() || !j.contains("text") || !j["text"].is_string()) {
    throw ProviderError("provider response has no text field");
  }
  ProviderResponse r;
  r.text = j["text"].get<std::string>();
  if (j.contains("finish_reason") && j["finish_reason"].is_string()) {
    r.finish_reason = j["finish_reason"].get<std::string>();
  }
  return r;
}

StubProvider::StubProvider(std::vector<StubRule> rules,
                           std::optional<std::string> default_text)
    : rules_(std::move(rules)), default_text_(std::move(default_text)) {}

std::unique_ptr<StubProvider> StubProvider::from_json(const Json& j) {
  if (!j.is_object()) throw std::invalid_argument("stub config must be an object");
  std::vector<StubRule> rules;
  if (j.contains("rules")) {
    for (const auto& r : j.at("rules")) {
      StubRule rule{r.at("match").get<std::string>(), r.at("text").get<std::string>()};
      if (r.contains("finish_reason")) {
        rule.finish_reason = r["finish_reason"].get<std::string>();
      }
      rules.push_back(std::move(rule));
    }
  }
  std::optional<std::string> def;
  if (j.contains("default") && j["default"].is_string()) {
    def = j["default"].get<std::string>();
  }
  auto stub = std::make_unique<StubProvider>(std::move(rules), std::move(def));
  if (j.contains("fail_ids")) {
    auto prefixes = j["fail_ids"].get<std::vector<std::string>>();
    stub->fail_when([prefixes](std::string_view id) {
      return std::any_of(prefixes.begin(), prefixes.end(),
                         [&](const std::string& p) { return id.starts_with(p); });
    });
  }
  return stub;
}

ProviderResponse StubProvider::complete(const ProviderRequest& req,
                                        std::string_view request_id) {
  ++calls_;
  CallLog entry{std::string(request_id), 1, 0, false, {}, 0.0};
  if (fail_when_ && fail_when_(request_id)) {
    entry.error = "injected failure";
    log(entry);
    throw ProviderError("stub: injected failure for " + std::string(request_id));
  }
  const std::string_view last =
      req.messages.empty() ? std::string_view() : req.messages.back().content;
  for (const auto& r : rules_) {
    if (last.find(r.match) != std::string_view::npos) {
      entry.ok = true;
      log(entry);
      return {r.text, r.finish_reason};
    }
  }
  if (default_text_) {
    entry.ok = true;
    log(entry);
    return {*default_text_, "stop"};
  }
  entry.error = "no matching rule";
  log(entry);
  throw ProviderError("stub: no rule matches request " + std::string(request_id));
}

HttpProviderConfig HttpProviderConfig::from_env() {
  HttpProviderConfig cfg;
  cfg.url = env_or_empty("FOCUSRL_PROVIDER_URL");
  cfg.api_key = env_or_empty("FOCUSRL_PROVIDER_KEY");
  return cfg;
}

void HttpProviderConfig::validate() const {
  if (url.empty()) throw std::invalid_argument("provider url is not set (FOCUSRL_PROVIDER_URL)");
  if (!url.starts_with("http://") && !url.starts_with("https://")) {
    throw std::invalid_argument("provider url must start with http:// or https://");
  }
  if (max_retries < 0) throw std::invalid_argument("max_retries must be >= 0");
  if (max_in_flight == 0 || max_in_flight > 1024) {
    throw std::invalid_argument("max_in_flight must lie in [1, 1024]");
  }
}

HttpProvider::HttpProvider(HttpProviderConfig cfg)
    : cfg_(std::move(cfg)), slots_(0) {
  cfg_.validate();
  const auto scheme_end = cfg_.url.find("://") + 3;
  const auto slash = cfg_.url.find('/', scheme_end);
  base_ = cfg_.url.substr(0, slash);
  path_ = slash == std::string::npos ? "/" : cfg_.url.substr(slash);
  slots_.release(static_cast<std::ptrdiff_t>(cfg_.max_in_flight));
}

ProviderResponse HttpProvider::complete(const ProviderRequest& req,
                                        std::string_view request_id) {
  ProviderRequest wire = req;
  if (wire.model.empty()) wire.model = cfg_.model;
  const std::string body = jsonl::dump_line(wire.to_json());

  httplib::Headers headers{{"X-Request-Id", std::string(request_id)}};
  if (!cfg_.api_key.empty()) {
    headers.emplace("Authorization", "Bearer " + cfg_.api_key);
  }

  std::string last_error;
  auto backoff = cfg_.initial_backoff;
  for (int attempt = 1; attempt <= cfg_.max_retries + 1; ++attempt) {
    if (attempt > 1) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    CallLog entry{std::string(request_id), attempt, 0, false, {}, 0.0};
    const auto t0 = std::chrono::steady_clock::now();

    slots_.acquire();
    const std::size_t now = ++in_flight_;
    std::size_t peak = peak_.load();
    while (now > peak && !peak_.compare_exchange_weak(peak, now)) {
    }
    httplib::Result res{nullptr, httplib::Error::Unknown};
    {
      httplib::Client client(base_);
      client.set_connection_timeout(cfg_.timeout);
      client.set_read_timeout(cfg_.timeout);
      client.set_write_timeout(cfg_.timeout);
      res = client.Post(path_, headers, body, "application/json");
    }
    --in_flight_;
    slots_.release();

    entry.elapsed_ms = ms_since(t0);
    if (!res) {
      entry.error = httplib::to_string(res.error());
      last_error = "transport error: " + entry.error;
      log(entry);
      continue;
    }
    entry.status = res->status;
    if (res->status != 200) {
      entry.error = "HTTP " + std::to_string(res->status);
      last_error = entry.error;
      log(entry);
      if (retryable(res->status)) continue;
      break;
    }
    const Json j = Json::parse(res->body, nullptr, false);
    if (j.is_discarded()) {
      entry.error = "response is not JSON";
      log(entry);
      throw ProviderError(std::string(request_id) + ": " + entry.error);
    }
    try {
      ProviderResponse out = ProviderResponse::from_json(j);
      entry.ok = true;
      log(entry);
      return out;
    } catch (const ProviderError& e) {
      entry.error = e.what();
      log(entry);
      throw;
    }
  }
  throw ProviderError(std::string(request_id) + ": " + last_error);
}

}  // namespace focusrl

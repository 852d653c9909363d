#pragma once

// Minimal JSON-over-HTTP client used by the external retriever, generator
// and NLI plugins. Only plain http:// endpoints are supported.

#include <algorithm>
#include <chrono>
#include <string>
#include <string_view>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "error.hpp"

namespace ragfair::http {

using json = nlohmann::json;

struct Endpoint {
  std::string host;
  int port = 80;
  std::string base_path;  // no trailing slash; may be empty

  std::string url() const { return "http://" + host + ":" + std::to_string(port) + base_path; }

  /// Accepts "http://host[:port][/prefix]". Anything else is a ConfigError.
  static Endpoint parse(std::string_view url) {
    constexpr std::string_view kScheme = "http://";
    if (url.find("://") == std::string_view::npos) {
      throw ConfigError("endpoint URL '" + std::string(url) + "' has no scheme (expected http://host:port)");
    }
    if (url.substr(0, kScheme.size()) != kScheme) {
      throw ConfigError("endpoint URL '" + std::string(url) + "': only http:// is supported");
    }
    std::string_view rest = url.substr(kScheme.size());
    Endpoint ep;
    auto slash = rest.find('/');
    std::string_view authority = rest.substr(0, slash);
    if (slash != std::string_view::npos) {
      ep.base_path = std::string(rest.substr(slash));
      while (!ep.base_path.empty() && ep.base_path.back() == '/') ep.base_path.pop_back();
    }
    auto colon = authority.rfind(':');
    if (colon != std::string_view::npos) {
      ep.host = std::string(authority.substr(0, colon));
      try {
        std::size_t used = 0;
        ep.port = std::stoi(std::string(authority.substr(colon + 1)), &used);
        if (used != authority.size() - colon - 1) throw std::invalid_argument("port");
      } catch (const std::exception&) {
        throw ConfigError("endpoint URL '" + std::string(url) + "' has an invalid port");
      }
      if (ep.port <= 0 || ep.port > 65535) throw ConfigError("endpoint URL '" + std::string(url) + "': port out of range");
    } else {
      ep.host = std::string(authority);
    }
    if (ep.host.empty()) throw ConfigError("endpoint URL '" + std::string(url) + "' has no host");
    return ep;
  }
};

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{200};
  double multiplier = 2.0;
  std::chrono::milliseconds max_backoff{5000};
  std::chrono::milliseconds timeout{60000};
};

/// POSTs `body` to `path` under the endpoint and returns the parsed JSON
/// reply. Connection errors, timeouts and 5xx replies are retried with
/// exponential backoff; 4xx replies and malformed JSON fail immediately.
inline json post_json(const Endpoint& ep, std::string_view path, const json& body, const RetryPolicy& policy) {
  const std::string full_path = ep.base_path + std::string(path);
  const std::string payload = body.dump();
  auto backoff = policy.initial_backoff;
  std::string last_error;
  const int attempts = std::max(1, policy.max_attempts);
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    httplib::Client cli(ep.host, ep.port);
    const auto secs = policy.timeout.count() / 1000;
    const auto usecs = (policy.timeout.count() % 1000) * 1000;
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    cli.set_write_timeout(secs, usecs);
    auto res = cli.Post(full_path, payload, "application/json");
    if (!res) {
      last_error = "request to " + ep.url() + std::string(path) + " failed: " + httplib::to_string(res.error());
    } else if (res->status >= 500) {
      last_error = ep.url() + std::string(path) + " returned HTTP " + std::to_string(res->status);
    } else if (res->status >= 400) {
      throw ServiceError(ep.url() + std::string(path) + " rejected the request with HTTP " +
                         std::to_string(res->status) + ": " + res->body);
    } else {
      try {
        return json::parse(res->body);
      } catch (const json::parse_error& e) {
        throw ServiceError(ep.url() + std::string(path) + " returned malformed JSON: " + e.what());
      }
    }
    if (attempt < attempts) {
      spdlog::debug("{} (attempt {}/{}), retrying in {} ms", last_error, attempt, attempts, backoff.count());
      std::this_thread::sleep_for(backoff);
      backoff = std::min(policy.max_backoff,
                         std::chrono::milliseconds(static_cast<long long>(backoff.count() * policy.multiplier)));
    }
  }
  throw ServiceError(last_error + " after " + std::to_string(attempts) + " attempt(s)");
}

/// Liveness probe used by config validation: any HTTP answer counts.
inline bool reachable(const Endpoint& ep, std::chrono::milliseconds timeout = std::chrono::milliseconds(2000)) {
  httplib::Client cli(ep.host, ep.port);
  cli.set_connection_timeout(timeout.count() / 1000, (timeout.count() % 1000) * 1000);
  cli.set_read_timeout(timeout.count() / 1000, (timeout.count() % 1000) * 1000);
  return static_cast<bool>(cli.Get(ep.base_path + "/health"));
}

}  // namespace ragfair::http

// SPDX-License-Identifier: Apache-2.0
#pragma once

/// Chat-style wire protocol shared by the remote planner and the remote tool
/// adapters.
///
///   request:  {"model": str, "messages": [{"role": str, "content": str}], "image"?: base64 str}
///   response: {"content": str}
///
/// POSTed as JSON; the bearer token, when configured, goes in Authorization.

#include "dermtrace/text.hpp"

#include <chrono>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace dermtrace {

inline constexpr const char* auth_token_env = "DERMTRACE_API_TOKEN";

struct RemoteEndpoint {
    std::string url;
    std::string model;
    std::string auth_token;
    double timeout_s = 60.0;
    int max_attempts = 3;
    double initial_backoff_s = 1.0;

    bool configured() const noexcept { return !url.empty(); }
    static RemoteEndpoint from_json(const json& j);
};

struct ChatMessage {
    std::string role;
    std::string content;
};

struct HttpReply {
    int status = 0;
    std::string body;
};

/// Raises TransportError with category connection or timeout when no reply
/// arrives. Non-2xx replies are returned, not thrown.
class HttpTransport {
public:
    virtual ~HttpTransport() = default;
    virtual HttpReply post(const std::string& url, const std::string& body,
                           const std::vector<std::pair<std::string, std::string>>& headers, double timeout_s) = 0;
};

/// cpp-httplib backed transport; one connection per request.
class HttplibTransport final : public HttpTransport {
public:
    HttpReply post(const std::string& url, const std::string& body,
                   const std::vector<std::pair<std::string, std::string>>& headers, double timeout_s) override;
};

HttpTransport& default_transport();

using Sleeper = std::function<void(std::chrono::milliseconds)>;
void real_sleep(std::chrono::milliseconds d);

json chat_request(const std::vector<ChatMessage>& messages, const std::optional<std::string>& image,
                  const std::string& model);

/// Sends one chat request. Connection failures, timeouts, 429 and 5xx are
/// retried with exponential backoff (1 s, 2 s, ... by default) for at most
/// `endpoint.max_attempts` attempts; anything else fails immediately.
std::string remote_chat(const std::vector<ChatMessage>& messages, const std::optional<std::string>& image,
                        const RemoteEndpoint& endpoint, HttpTransport& transport = default_transport(),
                        const Sleeper& sleep = real_sleep);

} // namespace dermtrace

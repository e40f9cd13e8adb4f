// SPDX-License-Identifier: Apache-2.0
#include "dermtrace/remote.hpp"

#include "dermtrace/error.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include <cmath>
#include <cstdlib>
#include <thread>

namespace dermtrace {

RemoteEndpoint RemoteEndpoint::from_json(const json& j)
{
    RemoteEndpoint ep;
    ep.url = j.value("url", "");
    ep.model = j.value("model", "");
    ep.timeout_s = j.value("timeout_s", ep.timeout_s);
    ep.max_attempts = j.value("max_attempts", ep.max_attempts);
    ep.initial_backoff_s = j.value("initial_backoff_s", ep.initial_backoff_s);
    if (const char* token = std::getenv(auth_token_env))
        ep.auth_token = token;
    return ep;
}

namespace {

struct SplitUrl {
    std::string origin;
    std::string path;
};

SplitUrl split_url(const std::string& url)
{
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw TransportError(TransportFailure::connection, "endpoint url '" + url + "' has no scheme");
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos)
        return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

} // namespace

HttpReply HttplibTransport::post(const std::string& url, const std::string& body,
                                 const std::vector<std::pair<std::string, std::string>>& headers, double timeout_s)
{
    auto [origin, path] = split_url(url);
    httplib::Client client(origin);
    auto secs = static_cast<time_t>(timeout_s);
    auto usecs = static_cast<time_t>((timeout_s - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    httplib::Headers h;
    for (const auto& [k, v] : headers)
        h.emplace(k, v);
    auto res = client.Post(path, h, body, "application/json");
    if (!res) {
        auto err = res.error();
        auto category = (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read)
                          ? TransportFailure::timeout
                          : TransportFailure::connection;
        throw TransportError(category, "POST " + url + " failed: " + httplib::to_string(err));
    }
    return HttpReply{res->status, res->body};
}

HttpTransport& default_transport()
{
    static HttplibTransport transport;
    return transport;
}

void real_sleep(std::chrono::milliseconds d)
{
    std::this_thread::sleep_for(d);
}

json chat_request(const std::vector<ChatMessage>& messages, const std::optional<std::string>& image,
                  const std::string& model)
{
    json msgs = json::array();
    for (const auto& m : messages)
        msgs.push_back({{"role", m.role}, {"content", m.content}});
    json req{{"model", model}, {"messages", msgs}};
    if (image)
        req["image"] = base64_encode(*image);
    return req;
}

std::string remote_chat(const std::vector<ChatMessage>& messages, const std::optional<std::string>& image,
                        const RemoteEndpoint& endpoint, HttpTransport& transport, const Sleeper& sleep)
{
    if (!endpoint.configured())
        throw ContractViolation("remote endpoint is not configured");
    auto body = chat_request(messages, image, endpoint.model).dump();
    std::vector<std::pair<std::string, std::string>> headers;
    if (!endpoint.auth_token.empty())
        headers.emplace_back("Authorization", "Bearer " + endpoint.auth_token);

    auto attempts = std::max(1, endpoint.max_attempts);
    for (int attempt = 1;; ++attempt) {
        try {
            auto reply = transport.post(endpoint.url, body, headers, endpoint.timeout_s);
            if (reply.status >= 200 && reply.status < 300) {
                json parsed;
                try {
                    parsed = json::parse(reply.body);
                } catch (const json::parse_error&) {
                    throw TransportError(TransportFailure::malformed, "response body is not JSON", reply.status);
                }
                if (!parsed.is_object() || !parsed.contains("content") || !parsed["content"].is_string())
                    throw TransportError(TransportFailure::malformed, "response lacks a string 'content' field",
                                         reply.status);
                return parsed["content"].get<std::string>();
            }
            bool transient = reply.status == 429 || reply.status >= 500;
            TransportError err(TransportFailure::status, "endpoint returned status " + std::to_string(reply.status),
                               reply.status);
            if (!transient || attempt >= attempts)
                throw err;
        } catch (const TransportError& e) {
            bool transient = e.category() == TransportFailure::connection || e.category() == TransportFailure::timeout
                          || (e.category() == TransportFailure::status && (e.status() == 429 || e.status() >= 500));
            if (!transient || attempt >= attempts)
                throw;
        }
        auto backoff = endpoint.initial_backoff_s * std::pow(2.0, attempt - 1);
        sleep(std::chrono::milliseconds(static_cast<long long>(backoff * 1000.0)));
    }
}

} // namespace dermtrace

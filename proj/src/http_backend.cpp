#include "httplib.h"

#include "crashforge/agent.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <regex>

namespace crashforge {

BackendReply HttpBackend::complete(const PromptBundle& bundle, const BackendProfile& profile, const std::string& credential) {
    static const std::regex url(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(profile.endpoint, m, url)) {
        return {BackendReply::Status::Failed, fmt::format("malformed endpoint '{}'", profile.endpoint), 0};
    }
    const std::string base = m[1].str();
    const std::string path = m[2].matched ? m[2].str() : "/";

    httplib::Client client(base);
    const auto timeout = std::chrono::duration<double>(profile.request_timeout_sec);
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    client.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    if (!credential.empty()) client.set_bearer_token_auth(credential);

    const auto res = client.Post(path, http_request_body(bundle, profile), "application/json");
    if (!res) {
        const auto err = res.error();
        const bool timed_out = err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read;
        return {timed_out ? BackendReply::Status::Timeout : BackendReply::Status::Failed, httplib::to_string(err), 0};
    }
    if (res->status == 401 || res->status == 403) return {BackendReply::Status::Unauthorized, res->body, res->status};
    if (res->status < 200 || res->status >= 300) {
        return {BackendReply::Status::Failed, fmt::format("HTTP {}", res->status), res->status};
    }
    try {
        const auto body = nlohmann::json::parse(res->body);
        const auto& text = body.at(nlohmann::json::json_pointer(profile.response_path));
        if (!text.is_string()) return {BackendReply::Status::Failed, fmt::format("'{}' is not a string", profile.response_path), res->status};
        return {BackendReply::Status::Ok, text.get<std::string>(), res->status};
    } catch (const nlohmann::json::exception& e) {
        return {BackendReply::Status::Failed, fmt::format("unreadable reply: {}", e.what()), res->status};
    }
}

}  // namespace crashforge

#pragma once

// HTTP completion backend. Wire contract: POST JSON
//   {"prompt", "nucleus_p", "repetition_penalty", "max_new_tokens"}
// to the endpoint, expecting {"text", "finish_reason"} back. Transient
// failures retry with exponential backoff; a request that still fails is
// reported as BackendError, never thrown.

#include <chrono>
#include <cstdlib>
#include <string>
#include <thread>

#include <httplib.h>

#include "chataug/genloop.hpp"

namespace chataug {

namespace detail {

struct SplitUrl {
    std::string base;  // scheme://host[:port]
    std::string path;  // leading slash
};

inline SplitUrl split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw std::invalid_argument("backend endpoint is not a URL: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

/// Accepts this artifact's names plus the common aliases.
inline FinishReason finish_reason_from_wire(std::string_view name) {
    if (name == "stop") return FinishReason::Eos;
    if (name == "length") return FinishReason::LengthCap;
    return finish_reason_from_name(name);
}

}  // namespace detail

class HttpCompletionBackend : public CompletionBackend {
public:
    explicit HttpCompletionBackend(BackendDescriptor desc) : desc_(std::move(desc)) {
        detail::split_url(desc_.endpoint);  // validate eagerly
    }

    std::string label() const override {
        return desc_.model_label.empty() ? desc_.endpoint : desc_.model_label;
    }

    CompletionResult complete(const CompletionRequest& request) override {
        const auto url = detail::split_url(desc_.endpoint);
        const json body{{"prompt", request.prompt},
                        {"nucleus_p", request.params.nucleus_p},
                        {"repetition_penalty", request.params.repetition_penalty},
                        {"max_new_tokens", request.params.max_new_tokens}};
        httplib::Headers headers;
        if (!desc_.auth_token_env.empty()) {
            if (const char* token = std::getenv(desc_.auth_token_env.c_str()))
                headers.emplace("Authorization", std::string("Bearer ") + token);
        }
        const std::string payload = body.dump();

        for (std::size_t attempt = 0; attempt <= desc_.max_retries; ++attempt) {
            if (attempt > 0) {
                auto backoff = std::chrono::milliseconds(100ull << (attempt - 1));
                std::this_thread::sleep_for(std::min(backoff, std::chrono::milliseconds(2000)));
            }
            httplib::Client client(url.base);
            const auto timeout = std::chrono::milliseconds(desc_.request_timeout_ms);
            client.set_connection_timeout(timeout);
            client.set_read_timeout(timeout);
            client.set_write_timeout(timeout);
            auto res = client.Post(url.path, headers, payload, "application/json");
            if (!res) continue;  // transport error
            if (res->status == 401 || res->status == 403) break;  // auth will not heal
            if (res->status != 200) continue;
            try {
                json j = json::parse(res->body);
                CompletionResult out;
                out.text = j.at("text").get<std::string>();
                out.finish_reason =
                    detail::finish_reason_from_wire(j.at("finish_reason").get<std::string>());
                return out;
            } catch (const std::exception&) {
                continue;  // malformed response body; retry
            }
        }
        return {{}, FinishReason::BackendError};
    }

private:
    BackendDescriptor desc_;
};

}  // namespace chataug

#pragma once

// Toxicity assessment through an external detector API. Every utterance is
// scored once, per-attribute means are taken over the utterances that
// returned that attribute, and nothing is ever filtered on the result.

#include <array>
#include <chrono>
#include <cstdlib>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>

#include "chataug/core.hpp"
#include "chataug/io.hpp"

namespace chataug {

enum class ToxicityAttribute {
    Toxicity,
    SevereToxicity,
    IdentityAttack,
    Insult,
    Profanity,
    Threat,
};

inline constexpr std::size_t kToxicityAttributeCount = 6;

inline constexpr std::array<std::string_view, kToxicityAttributeCount> kToxicityAttributeNames = {
    "toxicity", "severe_toxicity", "identity_attack", "insult", "profanity", "threat"};

inline std::string_view toxicity_attribute_name(ToxicityAttribute a) {
    return kToxicityAttributeNames[static_cast<std::size_t>(a)];
}

inline ToxicityAttribute toxicity_attribute_from_name(std::string_view name) {
    for (std::size_t i = 0; i < kToxicityAttributeNames.size(); ++i)
        if (kToxicityAttributeNames[i] == name) return static_cast<ToxicityAttribute>(i);
    throw std::invalid_argument("unknown toxicity attribute: " + std::string(name));
}

inline const std::array<ToxicityAttribute, kToxicityAttributeCount>& all_toxicity_attributes() {
    static const std::array<ToxicityAttribute, kToxicityAttributeCount> attrs = {
        ToxicityAttribute::Toxicity,      ToxicityAttribute::SevereToxicity,
        ToxicityAttribute::IdentityAttack, ToxicityAttribute::Insult,
        ToxicityAttribute::Profanity,     ToxicityAttribute::Threat};
    return attrs;
}

/// Per-attribute scores for one utterance; an attribute the detector did not
/// return is absent.
using ToxicityScores = std::map<ToxicityAttribute, double>;

class ToxicityClient {
public:
    virtual ~ToxicityClient() = default;
    /// nullopt = the request itself failed (after any internal retries).
    virtual std::optional<ToxicityScores> score(
        const std::string& text, std::span<const ToxicityAttribute> attributes) = 0;
};

struct ToxicityProfile {
    std::map<ToxicityAttribute, double> attribute_scores;  // mean per attribute
    std::map<ToxicityAttribute, std::size_t> attribute_samples;
    std::size_t scored_utterances = 0;  // all requested attributes present
    std::size_t failed_utterances = 0;
};

inline void to_json(json& j, const ToxicityProfile& p) {
    json means, samples;
    for (const auto& [attr, mean] : p.attribute_scores)
        means[std::string(toxicity_attribute_name(attr))] = mean;
    for (const auto& [attr, n] : p.attribute_samples)
        samples[std::string(toxicity_attribute_name(attr))] = n;
    j = json{{"attribute_scores", means},
             {"attribute_samples", samples},
             {"scored_utterances", p.scored_utterances},
             {"failed_utterances", p.failed_utterances}};
}

/// Score every utterance of the corpus once, pacing requests to at most
/// `rate_limit_rps` per second (0 = unpaced). An utterance counts as scored
/// only when every requested attribute came back; per-attribute means use
/// whatever that attribute returned.
inline ToxicityProfile assess_toxicity(std::span<const Dialogue> corpus, ToxicityClient& client,
                                       double rate_limit_rps = 0.0,
                                       std::span<const ToxicityAttribute> attributes =
                                           all_toxicity_attributes()) {
    if (attributes.empty()) throw std::invalid_argument("assess_toxicity: no attributes requested");
    ToxicityProfile profile;

    using clock = std::chrono::steady_clock;
    auto next_slot = clock::now();
    const auto interval =
        rate_limit_rps > 0.0
            ? std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(1.0 / rate_limit_rps))
            : clock::duration::zero();

    for (const auto& d : corpus) {
        for (const auto& u : d.utterances) {
            if (rate_limit_rps > 0.0) {
                std::this_thread::sleep_until(next_slot);
                next_slot = std::max(next_slot + interval, clock::now());
            }
            auto scores = client.score(u.text, attributes);
            if (!scores) {
                ++profile.failed_utterances;
                continue;
            }
            bool complete = true;
            for (auto attr : attributes) {
                auto it = scores->find(attr);
                if (it == scores->end()) {
                    complete = false;
                    continue;
                }
                // incremental mean: exact when every sample is identical
                const auto n = ++profile.attribute_samples[attr];
                double& mean = profile.attribute_scores[attr];
                mean += (it->second - mean) / static_cast<double>(n);
            }
            if (complete)
                ++profile.scored_utterances;
            else
                ++profile.failed_utterances;
        }
    }
    return profile;
}

/// Fixed- or scripted-score stand-in for the external detector.
class MockToxicityClient : public ToxicityClient {
public:
    using ScoreFn = std::function<std::optional<ToxicityScores>(
        const std::string&, std::span<const ToxicityAttribute>)>;

    explicit MockToxicityClient(double constant_score) {
        fn_ = [constant_score](const std::string&, std::span<const ToxicityAttribute> attrs) {
            ToxicityScores s;
            for (auto a : attrs) s[a] = constant_score;
            return std::optional<ToxicityScores>(std::move(s));
        };
    }

    explicit MockToxicityClient(ScoreFn fn) : fn_(std::move(fn)) {}

    std::optional<ToxicityScores> score(const std::string& text,
                                        std::span<const ToxicityAttribute> attributes) override {
        return fn_(text, attributes);
    }

private:
    ScoreFn fn_;
};

/// Detector wire contract: POST {"text", "attributes": [names...]} returning
/// {"scores": {name: value, ...}}. Retries transient failures; a 401/403
/// aborts the whole assessment with an actionable message.
class HttpToxicityClient : public ToxicityClient {
public:
    struct Options {
        std::string endpoint;
        std::string auth_token_env;
        std::size_t request_timeout_ms = 30000;
        std::size_t max_retries = 2;
    };

    explicit HttpToxicityClient(Options opts) : opts_(std::move(opts)) {
        const auto scheme_end = opts_.endpoint.find("://");
        if (scheme_end == std::string::npos)
            throw std::invalid_argument("toxicity endpoint is not a URL: " + opts_.endpoint);
        const auto path_start = opts_.endpoint.find('/', scheme_end + 3);
        base_ = path_start == std::string::npos ? opts_.endpoint : opts_.endpoint.substr(0, path_start);
        path_ = path_start == std::string::npos ? "/" : opts_.endpoint.substr(path_start);
    }

    std::optional<ToxicityScores> score(const std::string& text,
                                        std::span<const ToxicityAttribute> attributes) override {
        json names = json::array();
        for (auto a : attributes) names.push_back(std::string(toxicity_attribute_name(a)));
        const json body{{"text", text}, {"attributes", names}};
        httplib::Headers headers;
        if (!opts_.auth_token_env.empty()) {
            if (const char* token = std::getenv(opts_.auth_token_env.c_str()))
                headers.emplace("Authorization", std::string("Bearer ") + token);
        }
        const std::string payload = body.dump();

        for (std::size_t attempt = 0; attempt <= opts_.max_retries; ++attempt) {
            if (attempt > 0)
                std::this_thread::sleep_for(std::chrono::milliseconds(100ull << (attempt - 1)));
            httplib::Client client(base_);
            const auto timeout = std::chrono::milliseconds(opts_.request_timeout_ms);
            client.set_connection_timeout(timeout);
            client.set_read_timeout(timeout);
            client.set_write_timeout(timeout);
            auto res = client.Post(path_, headers, payload, "application/json");
            if (!res) continue;
            if (res->status == 401 || res->status == 403)
                throw std::runtime_error(
                    "toxicity detector rejected authentication (status " +
                    std::to_string(res->status) + "); set a valid token in $" +
                    (opts_.auth_token_env.empty() ? std::string("<auth env var>") : opts_.auth_token_env));
            if (res->status != 200) continue;
            try {
                json j = json::parse(res->body);
                ToxicityScores out;
                for (const auto& [name, value] : j.at("scores").items())
                    out[toxicity_attribute_from_name(name)] = value.get<double>();
                return out;
            } catch (const std::exception&) {
                continue;
            }
        }
        return std::nullopt;
    }

private:
    Options opts_;
    std::string base_;
    std::string path_;
};

}  // namespace chataug

#pragma once

// Shared test scaffolding: scratch directories, deterministic dialogue
// generators, and independently coded oracles. Oracle code here deliberately
// re-derives results straight from the formulas rather than reusing library
// internals.

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <unistd.h>

#include "chataug/core.hpp"
#include "chataug/rng.hpp"

namespace testutil {

/// Unique scratch directory, removed on destruction.
class ScratchDir {
public:
    explicit ScratchDir(const std::string& tag) {
        static std::atomic<unsigned> counter{0};
        auto base = std::filesystem::temp_directory_path() / "chataug-tests";
        path_ = base / (tag + "-" + std::to_string(::getpid()) + "-" +
                        std::to_string(counter.fetch_add(1)));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~ScratchDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    ScratchDir(const ScratchDir&) = delete;
    ScratchDir& operator=(const ScratchDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

/// Plain lowercase words, free of clitics, punctuation, and role words.
inline const std::vector<std::string>& word_pool() {
    static const std::vector<std::string> words = {
        "sorry",   "hear",   "that",   "sounds", "really", "hard",   "today", "maybe",
        "talking", "helps",  "often",  "small",  "steps",  "matter", "thank", "kind",
        "words",   "feel",   "alone",  "some",   "days",   "better", "tell",  "more",
        "about",   "what",   "keeps",  "weight", "carry",  "every",  "things", "slowly",
        "change",  "friend", "listen", "night",  "quiet",  "moment", "breathe", "rest"};
    return words;
}

inline std::string random_sentence(chataug::SplitMix64& rng, std::size_t n_words) {
    const auto& pool = word_pool();
    std::string out;
    for (std::size_t i = 0; i < n_words; ++i) {
        if (i) out += ' ';
        out += pool[rng.below(pool.size())];
    }
    return out;
}

/// Dialogue that the prompt round-trip must reproduce exactly: starts with a
/// seeker seed, second utterance is the supporter continuation, remaining
/// speakers arbitrary; utterance text is newline-free with single spaces.
inline chataug::Dialogue random_valid_dialogue(chataug::SplitMix64& rng, const std::string& id) {
    using namespace chataug;
    Dialogue d;
    d.id = id;
    d.seed_post_id = id;
    d.source = DialogueSource::Completion;
    const std::size_t total = 3 + rng.below(12);
    for (std::size_t i = 0; i < total; ++i) {
        Speaker who = i == 0   ? Speaker::Seeker
                      : i == 1 ? Speaker::Supporter
                               : (rng.below(2) ? Speaker::Seeker : Speaker::Supporter);
        d.utterances.push_back({who, random_sentence(rng, 1 + rng.below(12))});
    }
    return d;
}

/// Direct-formula log-odds oracle (delta, variance, z) for one term.
struct OracleSalience {
    double delta = 0.0;
    double variance = 0.0;
    double z = 0.0;
};

inline OracleSalience salience_oracle(double y_a, double n_a, double y_b, double n_b,
                                      double alpha_w, double alpha0) {
    OracleSalience r;
    const double log_odds_a = std::log((y_a + alpha_w) / (n_a + alpha0 - y_a - alpha_w));
    const double log_odds_b = std::log((y_b + alpha_w) / (n_b + alpha0 - y_b - alpha_w));
    r.delta = log_odds_a - log_odds_b;
    r.variance = 1.0 / (y_a + alpha_w) + 1.0 / (y_b + alpha_w);
    r.z = r.delta / std::sqrt(r.variance);
    return r;
}

/// Utterance with an exact token count under the pipeline tokenizer:
/// (n-1) pool words followed by a detached period.
inline std::string utterance_with_tokens(chataug::SplitMix64& rng, std::size_t tokens) {
    std::string text = random_sentence(rng, tokens - 1);
    text += " .";
    // tokenize() detaches the period anyway; keep it attached for realism
    text.erase(text.size() - 2, 1);
    return text;
}

}  // namespace testutil

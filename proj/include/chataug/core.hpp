#pragma once

// Domain types shared by every pipeline stage, plus the word tokenizer.
// All types are immutable values in spirit: construct, then share freely.

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "chataug/unicode.hpp"

namespace chataug {

enum class Speaker { Seeker, Supporter };

/// Role prompt text used in the flat transcript format.
inline std::string_view role_prompt(Speaker s) {
    return s == Speaker::Seeker ? "Human" : "AI";
}

inline std::optional<Speaker> speaker_from_role_prompt(std::string_view word) {
    if (word == "Human") return Speaker::Seeker;
    if (word == "AI") return Speaker::Supporter;
    return std::nullopt;
}

inline std::string_view speaker_name(Speaker s) {
    return s == Speaker::Seeker ? "seeker" : "supporter";
}

inline std::optional<Speaker> speaker_from_name(std::string_view name) {
    if (name == "seeker") return Speaker::Seeker;
    if (name == "supporter") return Speaker::Supporter;
    return std::nullopt;
}

/// One dialogue turn. Text is a single logical line: non-empty after
/// trimming and free of newline characters.
struct Utterance {
    Speaker speaker = Speaker::Seeker;
    std::string text;

    bool operator==(const Utterance&) const = default;
};

enum class DialogueSource { Crowdsourced, Completion, SimulatedChat };

inline std::string_view source_name(DialogueSource s) {
    switch (s) {
        case DialogueSource::Crowdsourced: return "crowdsourced";
        case DialogueSource::Completion: return "completion";
        case DialogueSource::SimulatedChat: return "simulated_chat";
    }
    return "crowdsourced";
}

inline std::optional<DialogueSource> source_from_name(std::string_view name) {
    if (name == "crowdsourced") return DialogueSource::Crowdsourced;
    if (name == "completion") return DialogueSource::Completion;
    if (name == "simulated_chat") return DialogueSource::SimulatedChat;
    return std::nullopt;
}

/// Decoding parameters, recorded on every generated completion.
struct GenerationParams {
    double nucleus_p = 0.9;
    double repetition_penalty = 1.05;
    int max_new_tokens = 1500;
    int epochs = 10;
    std::uint64_t seed = 0;  // mock backend only

    bool operator==(const GenerationParams&) const = default;

    /// Throws std::invalid_argument naming the offending field.
    void validate() const {
        if (!(nucleus_p > 0.0 && nucleus_p <= 1.0))
            throw std::invalid_argument("generation.nucleus_p must be in (0, 1]");
        if (repetition_penalty < 1.0)
            throw std::invalid_argument("generation.repetition_penalty must be >= 1");
        if (max_new_tokens < 1)
            throw std::invalid_argument("generation.max_new_tokens must be >= 1");
        if (epochs < 1)
            throw std::invalid_argument("generation.epochs must be >= 1");
    }
};

/// The central record flowing through every stage.
struct Dialogue {
    std::string id;
    std::vector<Utterance> utterances;
    std::string seed_post_id;  // empty when not derived from a seed post
    DialogueSource source = DialogueSource::Crowdsourced;
    std::optional<GenerationParams> gen_params;
    std::map<std::string, std::string> meta;
};

/// A first-person distress statement used as the first seeker utterance.
struct SeedPost {
    std::string id;
    std::string text;
    std::string emotion_label;
    std::size_t token_length = 0;  // always recomputed from text
};

// ---------------------------------------------------------------------------
// Tokenization
// ---------------------------------------------------------------------------

namespace detail {

inline constexpr std::u32string_view kSplitPunct = U".,!?;:\"()";

inline bool is_split_punct(char32_t cp) {
    return kSplitPunct.find(cp) != std::u32string_view::npos;
}

inline bool is_apostrophe(char32_t cp) { return cp == U'\'' || cp == 0x2019; }

inline char32_t ascii_lower(char32_t cp) {
    return (cp >= U'A' && cp <= U'Z') ? cp + 32 : cp;
}

// Peel clitics (n't, 's, 're, 've, 'll, 'd, 'm) off the end of a word,
// repeatedly, so "she'd've" yields {"she", "'d", "'ve"}.
inline void split_clitics(std::u32string_view word, std::vector<std::u32string_view>& parts) {
    std::vector<std::u32string_view> clitics;
    while (true) {
        const std::size_t n = word.size();
        std::size_t cut = 0;
        if (n > 3 && ascii_lower(word[n - 3]) == U'n' && is_apostrophe(word[n - 2]) &&
            ascii_lower(word[n - 1]) == U't') {
            cut = 3;
        } else if (n > 3 && is_apostrophe(word[n - 3])) {
            const char32_t a = ascii_lower(word[n - 2]);
            const char32_t b = ascii_lower(word[n - 1]);
            if ((a == U'r' && b == U'e') || (a == U'v' && b == U'e') || (a == U'l' && b == U'l'))
                cut = 3;
        }
        if (cut == 0 && n > 2 && is_apostrophe(word[n - 2])) {
            const char32_t a = ascii_lower(word[n - 1]);
            if (a == U's' || a == U'm' || a == U'd') cut = 2;
        }
        if (cut == 0) break;
        clitics.push_back(word.substr(word.size() - cut));
        word.remove_suffix(cut);
    }
    parts.push_back(word);
    for (auto it = clitics.rbegin(); it != clitics.rend(); ++it) parts.push_back(*it);
}

inline void tokenize_chunk(std::u32string_view chunk, std::vector<std::string>& out) {
    std::size_t start = 0;
    auto flush_word = [&](std::size_t end) {
        if (end <= start) return;
        std::vector<std::u32string_view> parts;
        split_clitics(chunk.substr(start, end - start), parts);
        for (auto p : parts) out.push_back(utf8_encode(p));
    };
    for (std::size_t i = 0; i < chunk.size(); ++i) {
        if (is_split_punct(chunk[i])) {
            flush_word(i);
            out.push_back(utf8_encode(chunk.substr(i, 1)));
            start = i + 1;
        }
    }
    flush_word(chunk.size());
}

}  // namespace detail

/// Deterministic word tokenizer. Splits on whitespace, detaches the
/// punctuation marks . , ! ? ; : " ( ) into single-character tokens and
/// splits contractions at the apostrophe into stem + clitic. Input is
/// canonically composed first. Total over any unicode input.
inline std::vector<std::string> tokenize(std::string_view text) {
    std::u32string cps = utf8_decode(text);
    compose_canonical(cps);
    std::vector<std::string> out;
    std::u32string_view v(cps);
    std::size_t i = 0;
    while (i < v.size()) {
        while (i < v.size() && is_space(v[i])) ++i;
        std::size_t j = i;
        while (j < v.size() && !is_space(v[j])) ++j;
        if (j > i) detail::tokenize_chunk(v.substr(i, j - i), out);
        i = j;
    }
    return out;
}

inline std::size_t token_count(std::string_view text) { return tokenize(text).size(); }

// ---------------------------------------------------------------------------
// Small text utilities shared by parsing and ingestion
// ---------------------------------------------------------------------------

/// Trim surrounding whitespace and collapse internal whitespace runs
/// (including newlines) to single spaces.
inline std::string collapse_whitespace(std::string_view text) {
    std::u32string cps = utf8_decode(text);
    std::string out;
    bool pending_space = false;
    for (char32_t cp : cps) {
        if (is_space(cp)) {
            pending_space = !out.empty();
        } else {
            if (pending_space) out.push_back(' ');
            pending_space = false;
            utf8_append(out, cp);
        }
    }
    return out;
}

/// Case-sensitive whole-word containment; boundaries are any character that
/// is not an ASCII letter, digit, underscore, or a non-ASCII byte.
inline bool contains_standalone_word(std::string_view text, std::string_view word) {
    if (word.empty()) return false;
    auto is_word_char = [](char c) {
        unsigned char u = static_cast<unsigned char>(c);
        return (u >= '0' && u <= '9') || (u >= 'A' && u <= 'Z') || (u >= 'a' && u <= 'z') ||
               u == '_' || u >= 0x80;
    };
    std::size_t pos = 0;
    while ((pos = text.find(word, pos)) != std::string_view::npos) {
        const std::size_t end = pos + word.size();
        const bool left_ok = pos == 0 || !is_word_char(text[pos - 1]);
        const bool right_ok = end == text.size() || !is_word_char(text[end]);
        if (left_ok && right_ok) return true;
        ++pos;
    }
    return false;
}

/// Build a SeedPost with its token length recomputed from the text.
inline SeedPost make_seed_post(std::string id, std::string text, std::string emotion_label) {
    SeedPost post;
    post.id = std::move(id);
    post.text = std::move(text);
    post.emotion_label = std::move(emotion_label);
    post.token_length = token_count(post.text);
    return post;
}

}  // namespace chataug

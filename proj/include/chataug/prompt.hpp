#pragma once

// Instruction-text serialization: dialogues to prompt text, completions back
// to dialogues, and fine-tuning records with a loss span over the dialogue
// portion only.

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "chataug/core.hpp"
#include "chataug/io.hpp"

namespace chataug {

struct PromptTemplate {
    std::string task_description;
    std::string seeker_prefix = "Human: ";
    std::string supporter_prefix = "AI: ";
    std::string turn_separator = "\n";

    const std::string& prefix_for(Speaker s) const {
        return s == Speaker::Seeker ? seeker_prefix : supporter_prefix;
    }

    void validate() const;
};

enum class FinishReason { Eos, LengthCap, BackendError };

inline std::string_view finish_reason_name(FinishReason r) {
    switch (r) {
        case FinishReason::Eos: return "eos";
        case FinishReason::LengthCap: return "length_cap";
        case FinishReason::BackendError: return "backend_error";
    }
    return "eos";
}

inline FinishReason finish_reason_from_name(std::string_view name) {
    if (name == "eos") return FinishReason::Eos;
    if (name == "length_cap") return FinishReason::LengthCap;
    if (name == "backend_error") return FinishReason::BackendError;
    throw std::invalid_argument("unknown finish reason: " + std::string(name));
}

/// One backend generation, as persisted in the raw-completion store.
struct RawCompletion {
    std::string seed_post_id;
    std::size_t epoch = 0;
    std::string prompt_text;
    std::string generated_text;
    FinishReason finish_reason = FinishReason::Eos;
    GenerationParams gen_params;
    std::string backend_label;
};

inline void to_json(json& j, const RawCompletion& c) {
    j = json{{"seed_post_id", c.seed_post_id},
             {"epoch", c.epoch},
             {"prompt_text", c.prompt_text},
             {"generated_text", c.generated_text},
             {"finish_reason", finish_reason_name(c.finish_reason)},
             {"gen_params", c.gen_params},
             {"backend_label", c.backend_label}};
}

inline void from_json(const json& j, RawCompletion& c) {
    j.at("seed_post_id").get_to(c.seed_post_id);
    j.at("epoch").get_to(c.epoch);
    j.at("prompt_text").get_to(c.prompt_text);
    j.at("generated_text").get_to(c.generated_text);
    c.finish_reason = finish_reason_from_name(j.at("finish_reason").get<std::string>());
    j.at("gen_params").get_to(c.gen_params);
    j.at("backend_label").get_to(c.backend_label);
}

enum class ParseFailureKind { NonDialogue, UnfinishedGeneration, PromptWordLeakage };

inline std::string_view parse_failure_name(ParseFailureKind k) {
    switch (k) {
        case ParseFailureKind::NonDialogue: return "non_dialogue";
        case ParseFailureKind::UnfinishedGeneration: return "unfinished_generation";
        case ParseFailureKind::PromptWordLeakage: return "prompt_word_leakage";
    }
    return "non_dialogue";
}

struct ParseError {
    ParseFailureKind kind;
    std::string detail;
};

struct ParseOutcome {
    std::variant<Dialogue, ParseError> value;

    bool ok() const { return std::holds_alternative<Dialogue>(value); }
    const Dialogue& dialogue() const { return std::get<Dialogue>(value); }
    Dialogue& dialogue() { return std::get<Dialogue>(value); }
    const ParseError& error() const { return std::get<ParseError>(value); }

    static ParseOutcome success(Dialogue d) { return {std::move(d)}; }
    static ParseOutcome failure(ParseFailureKind kind, std::string detail) {
        return {ParseError{kind, std::move(detail)}};
    }
};

namespace detail {

inline std::string_view rstrip(std::string_view s) {
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '\n'))
        s.remove_suffix(1);
    return s;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r'))
        s.remove_prefix(1);
    return rstrip(s);
}

/// Role word carried by a prefix: "Human: " -> "Human".
inline std::string_view role_word(std::string_view prefix) {
    auto w = rstrip(prefix);
    if (!w.empty() && w.back() == ':') w.remove_suffix(1);
    return w;
}

/// Match a line against a role prefix; prefixes compare with trailing
/// whitespace removed so "AI:" and "AI: " lines both count.
inline std::optional<std::string_view> strip_role(std::string_view line, std::string_view prefix) {
    auto bare = rstrip(prefix);
    if (bare.empty() || !line.starts_with(bare)) return std::nullopt;
    return line.substr(bare.size());
}

}  // namespace detail

inline void PromptTemplate::validate() const {
    if (seeker_prefix.empty() || supporter_prefix.empty())
        throw std::invalid_argument("template role prefixes must be non-empty");
    if (detail::rstrip(seeker_prefix) == detail::rstrip(supporter_prefix))
        throw std::invalid_argument("template role prefixes must differ");
    std::string_view desc = task_description;
    std::size_t pos = 0;
    while (pos <= desc.size()) {
        auto end = desc.find('\n', pos);
        auto line = desc.substr(pos, end == std::string_view::npos ? end : end - pos);
        if (detail::strip_role(line, seeker_prefix) || detail::strip_role(line, supporter_prefix))
            throw std::invalid_argument("task_description must not start a line with a role prefix");
        if (end == std::string_view::npos) break;
        pos = end + 1;
    }
}

/// Serialize a dialogue as role-prefixed lines, optionally preceded by the
/// task description and a blank line.
inline std::string render_dialogue(const Dialogue& dialogue, const PromptTemplate& tpl,
                                   bool include_description) {
    if (dialogue.utterances.empty()) throw std::invalid_argument("cannot render empty dialogue");
    std::string out;
    if (include_description && !tpl.task_description.empty()) {
        out += tpl.task_description;
        out += "\n\n";
    }
    bool first = true;
    for (const auto& u : dialogue.utterances) {
        if (!first) out += tpl.turn_separator;
        first = false;
        out += tpl.prefix_for(u.speaker);
        out += u.text;
    }
    return out;
}

/// Prompt fed to the completion backend: description, the seed post as the
/// opening seeker line, then the bare supporter prefix for the model to
/// continue. No whitespace follows the final colon.
inline std::string build_completion_prompt(const SeedPost& post, const PromptTemplate& tpl) {
    if (post.text.empty()) throw std::invalid_argument("seed post text must be non-empty");
    std::string out;
    if (!tpl.task_description.empty()) {
        out += tpl.task_description;
        out += "\n\n";
    }
    out += tpl.seeker_prefix;
    out += post.text;
    out += tpl.turn_separator;
    out += detail::rstrip(tpl.supporter_prefix);
    return out;
}

/// Parse generated text back into a dialogue. The first generated line
/// implicitly continues the trailing supporter prefix of the prompt. Blank
/// lines and role lines with empty content are dropped; any other line that
/// lacks a role prefix makes the whole completion NonDialogue.
inline ParseOutcome parse_completion(const SeedPost& post, const RawCompletion& completion,
                                     const PromptTemplate& tpl) {
    if (completion.finish_reason == FinishReason::BackendError)
        return ParseOutcome::failure(ParseFailureKind::UnfinishedGeneration, "backend error");
    if (completion.finish_reason != FinishReason::Eos)
        return ParseOutcome::failure(ParseFailureKind::UnfinishedGeneration,
                                     "generation hit the length cap before EOS");

    std::string text = std::string(detail::rstrip(tpl.supporter_prefix));
    text += completion.generated_text;

    std::vector<Utterance> parsed;
    std::string_view rest = text;
    std::size_t lineno = 0;
    while (!rest.empty()) {
        auto nl = rest.find('\n');
        auto line = rest.substr(0, nl);
        rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
        ++lineno;
        if (detail::trim(line).empty()) continue;
        std::optional<std::string_view> content;
        Speaker speaker = Speaker::Seeker;
        if (auto c = detail::strip_role(line, tpl.seeker_prefix)) {
            content = c;
        } else if (auto c = detail::strip_role(line, tpl.supporter_prefix)) {
            content = c;
            speaker = Speaker::Supporter;
        } else {
            return ParseOutcome::failure(
                ParseFailureKind::NonDialogue,
                "line " + std::to_string(lineno) + " does not start with a role prefix");
        }
        auto trimmed = detail::trim(*content);
        if (trimmed.empty()) continue;
        // internal whitespace runs collapse; the filters measure tokens
        parsed.push_back({speaker, collapse_whitespace(trimmed)});
    }
    if (parsed.empty())
        return ParseOutcome::failure(ParseFailureKind::NonDialogue, "no utterances parsed");

    const std::string_view leak_words[] = {detail::role_word(tpl.seeker_prefix),
                                           detail::role_word(tpl.supporter_prefix)};
    for (const auto& u : parsed) {
        for (auto word : leak_words) {
            if (contains_standalone_word(u.text, word))
                return ParseOutcome::failure(ParseFailureKind::PromptWordLeakage,
                                             "utterance contains role word \"" + std::string(word) +
                                                 "\"");
        }
    }

    Dialogue d;
    d.id = completion.seed_post_id + "-" + std::to_string(completion.epoch);
    d.seed_post_id = post.id;
    d.source = DialogueSource::Completion;
    d.gen_params = completion.gen_params;
    if (!completion.backend_label.empty()) d.meta["backend"] = completion.backend_label;
    d.utterances.reserve(parsed.size() + 1);
    d.utterances.push_back({Speaker::Seeker, post.text});
    d.utterances.insert(d.utterances.end(), parsed.begin(), parsed.end());
    return ParseOutcome::success(std::move(d));
}

/// Fine-tuning record: full rendered text plus the half-open span of the
/// dialogue lines, measured in Unicode code points. Loss is meant to be
/// taken over the span only, never over the task description.
struct FinetuneRecord {
    std::string text;
    std::size_t loss_start = 0;
    std::size_t loss_end = 0;
};

inline void to_json(json& j, const FinetuneRecord& r) {
    j = json{{"text", r.text}, {"loss_start", r.loss_start}, {"loss_end", r.loss_end}};
}

inline void from_json(const json& j, FinetuneRecord& r) {
    j.at("text").get_to(r.text);
    j.at("loss_start").get_to(r.loss_start);
    j.at("loss_end").get_to(r.loss_end);
}

inline FinetuneRecord export_finetune_record(const Dialogue& dialogue, const PromptTemplate& tpl) {
    FinetuneRecord rec;
    rec.text = render_dialogue(dialogue, tpl, /*include_description=*/true);
    rec.loss_end = code_point_count(rec.text);
    rec.loss_start =
        tpl.task_description.empty() ? 0 : code_point_count(tpl.task_description) + 2;
    return rec;
}

}  // namespace chataug

#pragma once

// Postprocessing rule engine. Every completion is either retained or
// attributed to exactly one rule: the first failing one in the fixed order
//   NonDialogue, UnfinishedGeneration, PromptWordLeakage,
//   UnbalancedUtterances, ConsecutiveUtterances,
//   TotalUtterances, UtteranceLength
// so removal counts plus retention always sum to the input total.

#include <array>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "chataug/core.hpp"
#include "chataug/io.hpp"
#include "chataug/prompt.hpp"

namespace chataug {

struct FilterThresholds {
    double balance_ratio = 2.5;              // max role count <= ratio * min role count
    std::size_t max_consecutive = 3;         // longest same-speaker run allowed
    std::size_t min_total_utterances_exclusive = 10;  // total must be strictly greater
    double seeker_avg_min = 6.0;             // inclusive bounds on mean token length
    double seeker_avg_max = 40.0;
    double supporter_avg_min = 8.0;
    double supporter_avg_max = 40.0;
    std::size_t max_utterance_len = 80;      // inclusive cap per utterance

    void validate() const {
        if (!(balance_ratio >= 1.0))
            throw std::invalid_argument("filters.balance_ratio must be >= 1");
        if (max_consecutive == 0)
            throw std::invalid_argument("filters.max_consecutive must be >= 1");
        if (!(seeker_avg_min > 0) || !(seeker_avg_min <= seeker_avg_max))
            throw std::invalid_argument("filters.seeker_avg bounds must satisfy 0 < min <= max");
        if (!(supporter_avg_min > 0) || !(supporter_avg_min <= supporter_avg_max))
            throw std::invalid_argument("filters.supporter_avg bounds must satisfy 0 < min <= max");
        if (max_utterance_len == 0)
            throw std::invalid_argument("filters.max_utterance_len must be >= 1");
    }
};

inline void to_json(json& j, const FilterThresholds& t) {
    j = json{{"balance_ratio", t.balance_ratio},
             {"max_consecutive", t.max_consecutive},
             {"min_total_utterances_exclusive", t.min_total_utterances_exclusive},
             {"seeker_avg_min", t.seeker_avg_min},
             {"seeker_avg_max", t.seeker_avg_max},
             {"supporter_avg_min", t.supporter_avg_min},
             {"supporter_avg_max", t.supporter_avg_max},
             {"max_utterance_len", t.max_utterance_len}};
}

inline void from_json(const json& j, FilterThresholds& t) {
    t.balance_ratio = j.value("balance_ratio", t.balance_ratio);
    t.max_consecutive = j.value("max_consecutive", t.max_consecutive);
    t.min_total_utterances_exclusive =
        j.value("min_total_utterances_exclusive", t.min_total_utterances_exclusive);
    t.seeker_avg_min = j.value("seeker_avg_min", t.seeker_avg_min);
    t.seeker_avg_max = j.value("seeker_avg_max", t.seeker_avg_max);
    t.supporter_avg_min = j.value("supporter_avg_min", t.supporter_avg_min);
    t.supporter_avg_max = j.value("supporter_avg_max", t.supporter_avg_max);
    t.max_utterance_len = j.value("max_utterance_len", t.max_utterance_len);
}

enum class FilterRule {
    NonDialogue,
    UnfinishedGeneration,
    PromptWordLeakage,
    UnbalancedUtterances,
    ConsecutiveUtterances,
    TotalUtterances,
    UtteranceLength,
};

inline constexpr std::size_t kFilterRuleCount = 7;

inline constexpr std::array<std::string_view, kFilterRuleCount> kFilterRuleNames = {
    "non_dialogue",       "unfinished_generation", "prompt_word_leakage", "unbalanced_utterances",
    "consecutive_utterances", "total_utterances",  "utterance_length"};

/// Row labels for the plain-text report table.
inline constexpr std::array<std::string_view, kFilterRuleCount> kFilterRuleLabels = {
    "Non-dialogue",          "Unfinished Generation",   "Prompt Word Leakage",
    "Unbalanced # Utterances", "Consecutive # Utterances", "Total # Utterances",
    "Utterance Length"};

inline FilterRule filter_rule_from_parse_failure(ParseFailureKind kind) {
    switch (kind) {
        case ParseFailureKind::NonDialogue: return FilterRule::NonDialogue;
        case ParseFailureKind::UnfinishedGeneration: return FilterRule::UnfinishedGeneration;
        case ParseFailureKind::PromptWordLeakage: return FilterRule::PromptWordLeakage;
    }
    return FilterRule::NonDialogue;
}

struct FilterVerdict {
    bool retained = false;
    FilterRule rule = FilterRule::NonDialogue;  // meaningful only when !retained

    static FilterVerdict pass() { return {true, FilterRule::NonDialogue}; }
    static FilterVerdict removed(FilterRule r) { return {false, r}; }
};

/// Unbalanced, then consecutive. Counts cover the whole reconstructed
/// transcript, seed utterance included.
inline std::optional<FilterRule> check_self_reinforcement(const Dialogue& d,
                                                          const FilterThresholds& t) {
    std::size_t n_seeker = 0, n_supporter = 0;
    for (const auto& u : d.utterances) (u.speaker == Speaker::Seeker ? n_seeker : n_supporter)++;
    const double hi = static_cast<double>(std::max(n_seeker, n_supporter));
    const double lo = static_cast<double>(std::min(n_seeker, n_supporter));
    if (hi > t.balance_ratio * lo) return FilterRule::UnbalancedUtterances;

    std::size_t run = 0;
    Speaker prev = Speaker::Seeker;
    for (const auto& u : d.utterances) {
        run = (run > 0 && u.speaker == prev) ? run + 1 : 1;
        prev = u.speaker;
        if (run > t.max_consecutive) return FilterRule::ConsecutiveUtterances;
    }
    return std::nullopt;
}

/// Total-count gate, then per-role mean length and per-utterance cap.
/// A role with no utterances cannot satisfy its mean bound and fails.
inline std::optional<FilterRule> check_distribution(const Dialogue& d, const FilterThresholds& t) {
    if (d.utterances.size() <= t.min_total_utterances_exclusive) return FilterRule::TotalUtterances;

    std::size_t n_seeker = 0, n_supporter = 0, tok_seeker = 0, tok_supporter = 0;
    for (const auto& u : d.utterances) {
        const std::size_t n = token_count(u.text);
        if (n > t.max_utterance_len) return FilterRule::UtteranceLength;
        if (u.speaker == Speaker::Seeker) {
            ++n_seeker;
            tok_seeker += n;
        } else {
            ++n_supporter;
            tok_supporter += n;
        }
    }
    auto mean_out_of_range = [](std::size_t toks, std::size_t n, double lo, double hi) {
        if (n == 0) return true;
        const double mean = static_cast<double>(toks) / static_cast<double>(n);
        return mean < lo || mean > hi;
    };
    if (mean_out_of_range(tok_seeker, n_seeker, t.seeker_avg_min, t.seeker_avg_max) ||
        mean_out_of_range(tok_supporter, n_supporter, t.supporter_avg_min, t.supporter_avg_max))
        return FilterRule::UtteranceLength;
    return std::nullopt;
}

/// Full rule chain for an already-parsed dialogue.
inline FilterVerdict classify_dialogue(const Dialogue& d, const FilterThresholds& t) {
    if (auto rule = check_self_reinforcement(d, t)) return FilterVerdict::removed(*rule);
    if (auto rule = check_distribution(d, t)) return FilterVerdict::removed(*rule);
    return FilterVerdict::pass();
}

struct FilterReport {
    std::size_t total = 0;
    std::array<std::size_t, kFilterRuleCount> removed_by_rule{};
    std::size_t retained = 0;
    std::size_t input_errors = 0;  // completions whose seed id resolved to nothing

    std::size_t removed_total() const {
        std::size_t sum = 0;
        for (auto c : removed_by_rule) sum += c;
        return sum;
    }

    double retention_ratio() const {
        return total == 0 ? 0.0 : static_cast<double>(retained) / static_cast<double>(total);
    }

    void count(FilterRule rule) {
        ++total;
        ++removed_by_rule[static_cast<std::size_t>(rule)];
    }

    void count_retained() {
        ++total;
        ++retained;
    }

    void merge(const FilterReport& other) {
        total += other.total;
        retained += other.retained;
        input_errors += other.input_errors;
        for (std::size_t i = 0; i < removed_by_rule.size(); ++i)
            removed_by_rule[i] += other.removed_by_rule[i];
    }
};

inline void to_json(json& j, const FilterReport& r) {
    json removed;
    for (std::size_t i = 0; i < kFilterRuleCount; ++i)
        removed[std::string(kFilterRuleNames[i])] = r.removed_by_rule[i];
    j = json{{"total", r.total},
             {"removed_by_rule", removed},
             {"retained", r.retained},
             {"retention_ratio", r.retention_ratio()},
             {"input_errors", r.input_errors}};
}

inline void from_json(const json& j, FilterReport& r) {
    j.at("total").get_to(r.total);
    j.at("retained").get_to(r.retained);
    r.input_errors = j.value("input_errors", std::size_t{0});
    const auto& removed = j.at("removed_by_rule");
    for (std::size_t i = 0; i < kFilterRuleCount; ++i)
        removed.at(std::string(kFilterRuleNames[i])).get_to(r.removed_by_rule[i]);
}

/// Aligned text table with the same grouping as the published accounting.
inline std::string format_filter_report(const FilterReport& r) {
    auto pct = [&](std::size_t n) {
        char buf[32];
        const double p = r.total == 0 ? 0.0 : 100.0 * static_cast<double>(n) / static_cast<double>(r.total);
        std::snprintf(buf, sizeof(buf), "%.1f%%", p);
        return std::string(buf);
    };
    auto row = [&](std::string_view label, std::size_t n, int indent) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "%-*s%-*s %8zu %8s\n", indent, "", 28 - indent,
                      std::string(label).c_str(), n, pct(n).c_str());
        return std::string(buf);
    };
    std::string out;
    {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "%-28s %8s %8s\n", "Heuristics", "Count", "Prop.");
        out += buf;
    }
    out += std::string(46, '-') + "\n";
    out += "Augmentation Failures\n";
    for (std::size_t i = 0; i <= 2; ++i)
        out += row(kFilterRuleLabels[i], r.removed_by_rule[i], 2);
    out += "Harmful Self-reinforcement\n";
    for (std::size_t i = 3; i <= 4; ++i)
        out += row(kFilterRuleLabels[i], r.removed_by_rule[i], 2);
    out += "Distributional Gaps\n";
    for (std::size_t i = 5; i <= 6; ++i)
        out += row(kFilterRuleLabels[i], r.removed_by_rule[i], 2);
    out += std::string(46, '-') + "\n";
    out += row("Final Retention", r.retained, 0);
    return out;
}

struct PostprocessResult {
    std::vector<Dialogue> retained;
    FilterReport report;
};

/// Run the full chain over a batch of raw completions. Order of `retained`
/// follows the input stream. Retained dialogues record their verdict in
/// meta["filter"].
inline PostprocessResult postprocess_corpus(const std::vector<RawCompletion>& completions,
                                            const std::vector<SeedPost>& posts,
                                            const PromptTemplate& tpl,
                                            const FilterThresholds& thresholds) {
    thresholds.validate();
    std::unordered_map<std::string_view, const SeedPost*> by_id;
    for (const auto& p : posts) by_id.emplace(p.id, &p);

    PostprocessResult result;
    for (const auto& c : completions) {
        auto it = by_id.find(c.seed_post_id);
        if (it == by_id.end()) {
            ++result.report.input_errors;
            continue;
        }
        ParseOutcome outcome = parse_completion(*it->second, c, tpl);
        if (!outcome.ok()) {
            result.report.count(filter_rule_from_parse_failure(outcome.error().kind));
            continue;
        }
        Dialogue d = std::move(outcome.dialogue());
        FilterVerdict verdict = classify_dialogue(d, thresholds);
        if (!verdict.retained) {
            result.report.count(verdict.rule);
            continue;
        }
        result.report.count_retained();
        d.meta["filter"] = "retained";
        result.retained.push_back(std::move(d));
    }
    return result;
}

}  // namespace chataug

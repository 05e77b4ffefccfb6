#pragma once

// Deterministic stand-in for a completion model. Transcripts are synthesized
// from a fixed word pool, keyed on (corpus seed, seed post id, epoch), with
// injectable failure modes whose default rates roughly mirror the removal
// proportions observed at paper scale. The same synthesizer drives the
// committed test fixtures, so planted ground truth and backend output can
// never drift apart.

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "chataug/genloop.hpp"
#include "chataug/prompt.hpp"
#include "chataug/rng.hpp"

namespace chataug {

struct MockFailureRates {
    double non_dialogue = 0.003;
    double unfinished = 0.034;
    double leakage = 0.021;
    double unbalanced = 0.052;
    double consecutive = 0.035;
    double total = 0.048;
    double length = 0.080;
    double backend_error = 0.0;

    void validate() const {
        const double rates[] = {non_dialogue, unfinished, leakage,       unbalanced,
                                consecutive,  total,      length,        backend_error};
        double sum = 0.0;
        for (double r : rates) {
            if (r < 0.0 || r > 1.0)
                throw std::invalid_argument("mock failure rates must be within [0, 1]");
            sum += r;
        }
        if (sum > 1.0) throw std::invalid_argument("mock failure rates must sum to at most 1");
    }
};

inline void to_json(json& j, const MockFailureRates& r) {
    j = json{{"non_dialogue", r.non_dialogue}, {"unfinished", r.unfinished},
             {"leakage", r.leakage},           {"unbalanced", r.unbalanced},
             {"consecutive", r.consecutive},   {"total", r.total},
             {"length", r.length},             {"backend_error", r.backend_error}};
}

inline void from_json(const json& j, MockFailureRates& r) {
    r.non_dialogue = j.value("non_dialogue", r.non_dialogue);
    r.unfinished = j.value("unfinished", r.unfinished);
    r.leakage = j.value("leakage", r.leakage);
    r.unbalanced = j.value("unbalanced", r.unbalanced);
    r.consecutive = j.value("consecutive", r.consecutive);
    r.total = j.value("total", r.total);
    r.length = j.value("length", r.length);
    r.backend_error = j.value("backend_error", r.backend_error);
}

/// What a synthesized completion is built to become downstream.
enum class PlantClass {
    Clean,
    NonDialogue,
    Unfinished,
    Leakage,
    Unbalanced,
    Consecutive,
    Total,
    Length,
    BackendError,
};

inline constexpr std::array<std::string_view, 9> kPlantClassNames = {
    "clean",      "non_dialogue", "unfinished", "leakage",       "unbalanced",
    "consecutive", "total",       "length",     "backend_error"};

inline PlantClass plant_class_from_name(std::string_view name) {
    for (std::size_t i = 0; i < kPlantClassNames.size(); ++i)
        if (kPlantClassNames[i] == name) return static_cast<PlantClass>(i);
    throw std::invalid_argument("unknown plant class: " + std::string(name));
}

// ---------------------------------------------------------------------------
// Transcript synthesis

namespace detail {

inline constexpr std::array<std::string_view, 48> kMockWords = {
    "i",       "feel",    "like",    "that",    "sounds",  "really",  "hard",   "thank",
    "you",     "for",     "sharing", "this",    "with",    "me",      "today",  "it",
    "must",    "be",      "so",      "tough",   "to",      "carry",   "alone",  "can",
    "tell",    "how",     "much",    "effort",  "took",    "what",    "helped", "last",
    "time",    "things",  "felt",    "heavy",   "maybe",   "we",      "could",  "think",
    "about",   "small",   "steps",   "together", "your",   "friends", "family", "work"};

/// Exactly `tokens` tokens under the core tokenizer: tokens-1 pool words
/// plus the trailing period.
inline std::string mock_utterance(SplitMix64& rng, std::size_t tokens) {
    std::string out;
    for (std::size_t i = 0; i + 1 < tokens; ++i) {
        if (i) out.push_back(' ');
        out += kMockWords[rng.below(kMockWords.size())];
    }
    if (!out.empty() && out.front() >= 'a' && out.front() <= 'z')
        out.front() = static_cast<char>(out.front() - 'a' + 'A');
    out.push_back('.');
    return out;
}

struct PlannedUtterance {
    Speaker speaker;
    std::size_t tokens;
    std::string text;  // overrides synthesis when non-empty
};

/// Alternating plan starting with the supporter, `count` utterances.
inline std::vector<PlannedUtterance> alternating_plan(SplitMix64& rng, std::size_t count) {
    std::vector<PlannedUtterance> plan;
    plan.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const bool supporter = i % 2 == 0;
        plan.push_back({supporter ? Speaker::Supporter : Speaker::Seeker,
                        supporter ? 10 + rng.below(9) : 8 + rng.below(7),
                        {}});
    }
    return plan;
}

inline std::string realize_transcript(SplitMix64& rng, const std::vector<PlannedUtterance>& plan,
                                      const PromptTemplate& tpl) {
    std::string out;
    for (std::size_t i = 0; i < plan.size(); ++i) {
        const auto& u = plan[i];
        const std::string text = u.text.empty() ? mock_utterance(rng, u.tokens) : u.text;
        if (i == 0) {
            out += " ";  // continues the bare supporter prefix at the prompt's end
            out += text;
        } else {
            out += "\n";
            out += tpl.prefix_for(u.speaker);
            out += text;
        }
    }
    return out;
}

}  // namespace detail

struct SynthesizedCompletion {
    std::string generated_text;
    FinishReason finish_reason = FinishReason::Eos;
};

/// Build a completion that the parse/filter chain will attribute to exactly
/// `cls`. The transcript always begins with the supporter's continuation of
/// the prompt (no leading role prefix on the first line).
inline SynthesizedCompletion synthesize_completion(SplitMix64& rng, PlantClass cls,
                                                   const PromptTemplate& tpl) {
    using detail::PlannedUtterance;
    SynthesizedCompletion out;
    switch (cls) {
        case PlantClass::BackendError:
            out.finish_reason = FinishReason::BackendError;
            return out;
        case PlantClass::Unfinished: {
            auto plan = detail::alternating_plan(rng, 11 + rng.below(7));
            std::string text = detail::realize_transcript(rng, plan, tpl);
            out.generated_text = text.substr(0, text.size() * 3 / 5);  // cut mid-transcript
            out.finish_reason = FinishReason::LengthCap;
            return out;
        }
        case PlantClass::NonDialogue: {
            auto plan = detail::alternating_plan(rng, 2);
            std::string text = detail::realize_transcript(rng, plan, tpl);
            text += "\nThey kept talking quietly until the morning came.";
            out.generated_text = std::move(text);
            return out;
        }
        case PlantClass::Leakage: {
            auto plan = detail::alternating_plan(rng, 11 + rng.below(7));
            const std::size_t slot = 2 * rng.below(plan.size() / 2);  // a supporter slot
            plan[slot].text = "Honestly sometimes i sound like an AI when i talk this way.";
            out.generated_text = detail::realize_transcript(rng, plan, tpl);
            return out;
        }
        case PlantClass::Unbalanced: {
            // 11 supporter vs 3 generated seeker (4 with the seed): 11 > 2.5*4,
            // while no same-speaker run exceeds 3.
            std::vector<PlannedUtterance> plan;
            for (int block = 0; block < 3; ++block) {
                for (int s = 0; s < 3; ++s)
                    plan.push_back({Speaker::Supporter, 10 + rng.below(9), {}});
                plan.push_back({Speaker::Seeker, 8 + rng.below(7), {}});
            }
            plan.push_back({Speaker::Supporter, 10 + rng.below(9), {}});
            plan.push_back({Speaker::Supporter, 10 + rng.below(9), {}});
            out.generated_text = detail::realize_transcript(rng, plan, tpl);
            return out;
        }
        case PlantClass::Consecutive: {
            // balanced 8 supporter / 6 seeker but with a supporter run of 4
            std::vector<PlannedUtterance> plan;
            auto sup = [&] { plan.push_back({Speaker::Supporter, 10 + rng.below(9), {}}); };
            auto seek = [&] { plan.push_back({Speaker::Seeker, 8 + rng.below(7), {}}); };
            sup(); seek(); sup(); seek(); sup(); seek();
            sup(); sup(); sup(); sup();  // the run
            seek(); sup(); seek();
            out.generated_text = detail::realize_transcript(rng, plan, tpl);
            return out;
        }
        case PlantClass::Total: {
            // 9 generated + seed = 10 utterances -- one short of passing
            out.generated_text =
                detail::realize_transcript(rng, detail::alternating_plan(rng, 9), tpl);
            return out;
        }
        case PlantClass::Length: {
            auto plan = detail::alternating_plan(rng, 11);
            if (rng.below(2) == 0) {
                plan[2 * rng.below(plan.size() / 2)].tokens = 81 + rng.below(10);  // hard cap
            } else {
                for (auto& u : plan)  // supporter mean sinks below 8
                    if (u.speaker == Speaker::Supporter) u.tokens = 5;
            }
            out.generated_text = detail::realize_transcript(rng, plan, tpl);
            return out;
        }
        case PlantClass::Clean:
            break;
    }
    out.generated_text =
        detail::realize_transcript(rng, detail::alternating_plan(rng, 11 + rng.below(7)), tpl);
    return out;
}

/// Rate-weighted class draw; the leftover probability mass is Clean.
inline PlantClass draw_plant_class(SplitMix64& rng, const MockFailureRates& rates) {
    const std::pair<double, PlantClass> table[] = {
        {rates.non_dialogue, PlantClass::NonDialogue}, {rates.unfinished, PlantClass::Unfinished},
        {rates.leakage, PlantClass::Leakage},          {rates.unbalanced, PlantClass::Unbalanced},
        {rates.consecutive, PlantClass::Consecutive},  {rates.total, PlantClass::Total},
        {rates.length, PlantClass::Length},            {rates.backend_error, PlantClass::BackendError}};
    double u = rng.unit();
    for (const auto& [rate, cls] : table) {
        if (u < rate) return cls;
        u -= rate;
    }
    return PlantClass::Clean;
}

class MockCompletionBackend : public CompletionBackend {
public:
    explicit MockCompletionBackend(PromptTemplate tpl, MockFailureRates rates = {},
                                   std::string label = "mock-backend")
        : tpl_(std::move(tpl)), rates_(rates), label_(std::move(label)) {
        rates_.validate();
    }

    std::string label() const override { return label_; }

    CompletionResult complete(const CompletionRequest& request) override {
        SplitMix64 rng = rng_for_completion(request.params.seed, request.seed_post_id, request.epoch);
        const PlantClass cls = draw_plant_class(rng, rates_);
        SynthesizedCompletion s = synthesize_completion(rng, cls, tpl_);
        return {std::move(s.generated_text), s.finish_reason};
    }

private:
    PromptTemplate tpl_;
    MockFailureRates rates_;
    std::string label_;
};

}  // namespace chataug

#include <catch2/catch_amalgamated.hpp>

#include "chataug/filters.hpp"
#include "chataug/io.hpp"
#include "chataug/mock_backend.hpp"
#include "chataug/pipeline.hpp"

#include "support/helpers.hpp"

using namespace chataug;

namespace {

// Dialogue with scripted speaker sequence; every utterance gets an exact
// token count (role-dependent default keeps the means inside the windows).
Dialogue scripted(const std::vector<Speaker>& order, std::size_t seeker_tokens = 10,
                  std::size_t supporter_tokens = 12) {
    SplitMix64 rng{0x5EED};
    Dialogue d;
    d.id = "scripted";
    d.seed_post_id = "scripted";
    d.source = DialogueSource::Completion;
    for (Speaker s : order) {
        const std::size_t tokens = s == Speaker::Seeker ? seeker_tokens : supporter_tokens;
        d.utterances.push_back({s, testutil::utterance_with_tokens(rng, tokens)});
    }
    return d;
}

std::vector<Speaker> speakers(const std::string& pattern) {
    std::vector<Speaker> order;
    for (char c : pattern)
        order.push_back(c == 'S' ? Speaker::Seeker : Speaker::Supporter);
    return order;
}

}  // namespace

TEST_CASE("balance boundary: 10 vs 4 passes, 11 vs 4 fails", "[filters]") {
    const FilterThresholds t;
    // 10 seeker / 4 supporter, arranged with no run longer than 3
    Dialogue pass = scripted(speakers("SSPSSPSSPSSPSS"));
    auto v = classify_dialogue(pass, t);
    CHECK(v.retained);

    // 11 seeker / 4 supporter: 11 > 2.5 * 4 = 10
    Dialogue fail = scripted(speakers("SSSPSSSPSSSPSSP"));
    v = classify_dialogue(fail, t);
    REQUIRE_FALSE(v.retained);
    CHECK(v.rule == FilterRule::UnbalancedUtterances);
}

TEST_CASE("consecutive boundary: run of 3 passes, 4 fails", "[filters]") {
    const FilterThresholds t;
    Dialogue pass = scripted(speakers("SPSPPPSPSPSP"));
    auto v = classify_dialogue(pass, t);
    CHECK(v.retained);

    Dialogue fail = scripted(speakers("SPSPPPPSPSPS"));
    v = classify_dialogue(fail, t);
    REQUIRE_FALSE(v.retained);
    CHECK(v.rule == FilterRule::ConsecutiveUtterances);
}

TEST_CASE("total boundary: 10 fails, 11 passes", "[filters]") {
    const FilterThresholds t;
    Dialogue fail = scripted(speakers("SPSPSPSPSP"));
    auto v = classify_dialogue(fail, t);
    REQUIRE_FALSE(v.retained);
    CHECK(v.rule == FilterRule::TotalUtterances);

    Dialogue pass = scripted(speakers("SPSPSPSPSPS"));
    v = classify_dialogue(pass, t);
    CHECK(v.retained);
}

TEST_CASE("utterance length boundary: 80 passes, 81 fails", "[filters]") {
    const FilterThresholds t;
    SplitMix64 rng{0xBEEF};
    auto make = [&](std::size_t longest) {
        Dialogue d = scripted(speakers("SPSPSPSPSPSP"));
        d.utterances[2].text = testutil::utterance_with_tokens(rng, longest);
        return d;
    };
    // one 80-token seeker utterance; seeker mean (80 + 5*10)/6 = 21.7 stays in range
    auto v = classify_dialogue(make(80), t);
    CHECK(v.retained);

    v = classify_dialogue(make(81), t);
    REQUIRE_FALSE(v.retained);
    CHECK(v.rule == FilterRule::UtteranceLength);
}

TEST_CASE("mean length windows per role", "[filters]") {
    const FilterThresholds t;
    // supporter mean 7.9 < 8 fails even with all utterances short of the cap
    Dialogue low_sup = scripted(speakers("SPSPSPSPSPSPSPSPSPSP"), 10, 8);
    SplitMix64 rng{1};
    low_sup.utterances[1].text = testutil::utterance_with_tokens(rng, 7);  // mean 7.9
    auto v = classify_dialogue(low_sup, t);
    REQUIRE_FALSE(v.retained);
    CHECK(v.rule == FilterRule::UtteranceLength);

    // seeker mean below 6 fails
    Dialogue low_seek = scripted(speakers("SPSPSPSPSPSP"), 5, 12);
    v = classify_dialogue(low_seek, t);
    REQUIRE_FALSE(v.retained);
    CHECK(v.rule == FilterRule::UtteranceLength);

    // means above 40 fail
    Dialogue high_seek = scripted(speakers("SPSPSPSPSPSP"), 41, 12);
    v = classify_dialogue(high_seek, t);
    REQUIRE_FALSE(v.retained);
    CHECK(v.rule == FilterRule::UtteranceLength);
}

TEST_CASE("first failing rule wins attribution", "[filters]") {
    const FilterThresholds t;
    // unbalanced AND a >3 run AND short total: unbalanced is checked first
    Dialogue multi = scripted(speakers("SSSSSSSSSSSP"));
    auto v = classify_dialogue(multi, t);
    REQUIRE_FALSE(v.retained);
    CHECK(v.rule == FilterRule::UnbalancedUtterances);
}

TEST_CASE("filter rule order and labels match the published grouping", "[filters]") {
    CHECK(kFilterRuleNames[0] == "non_dialogue");
    CHECK(kFilterRuleNames[1] == "unfinished_generation");
    CHECK(kFilterRuleNames[2] == "prompt_word_leakage");
    CHECK(kFilterRuleNames[3] == "unbalanced_utterances");
    CHECK(kFilterRuleNames[4] == "consecutive_utterances");
    CHECK(kFilterRuleNames[5] == "total_utterances");
    CHECK(kFilterRuleNames[6] == "utterance_length");

    CHECK(kFilterRuleLabels[0] == "Non-dialogue");
    CHECK(kFilterRuleLabels[1] == "Unfinished Generation");
    CHECK(kFilterRuleLabels[2] == "Prompt Word Leakage");
    CHECK(kFilterRuleLabels[3] == "Unbalanced # Utterances");
    CHECK(kFilterRuleLabels[4] == "Consecutive # Utterances");
    CHECK(kFilterRuleLabels[5] == "Total # Utterances");
    CHECK(kFilterRuleLabels[6] == "Utterance Length");
}

TEST_CASE("threshold configuration is honored", "[filters]") {
    FilterThresholds t;
    t.max_consecutive = 5;
    Dialogue run4 = scripted(speakers("SPSPPPPSPSPS"));
    CHECK(classify_dialogue(run4, t).retained);

    t = {};
    t.balance_ratio = 3.0;
    Dialogue eleven4 = scripted(speakers("SSSPSSSPSSSPSSP"));
    CHECK(classify_dialogue(eleven4, t).retained);  // 11 <= 3 * 4
}

TEST_CASE("threshold validation messages", "[filters]") {
    FilterThresholds t;
    t.balance_ratio = 0.0;
    CHECK_THROWS_WITH(t.validate(), Catch::Matchers::ContainsSubstring("filters.balance_ratio"));
    t = {};
    t.max_consecutive = 0;
    CHECK_THROWS_WITH(t.validate(), Catch::Matchers::ContainsSubstring("filters.max_consecutive"));
    t = {};
    t.seeker_avg_min = 50.0;  // exceeds max
    CHECK_THROWS(t.validate());
}

TEST_CASE("shipped fixture reproduces the planted counts exactly", "[filters]") {
    const std::filesystem::path data = CHATAUG_TEST_DATA_DIR;
    auto posts = load_jsonl<SeedPost>(data / "fixture_seeds.jsonl");
    auto completions = load_jsonl<RawCompletion>(data / "fixture_completions.jsonl");
    const json manifest = json::parse(read_text_file(data / "fixture_manifest.json"));

    auto result = postprocess_corpus(completions, posts, default_prompt_template(), {});

    CHECK(result.report.total == manifest.at("total").get<std::size_t>());
    CHECK(result.report.retained == manifest.at("expected_retained").get<std::size_t>());
    CHECK(result.report.input_errors == 0);
    const json& expected = manifest.at("expected_removed_by_rule");
    for (std::size_t r = 0; r < kFilterRuleCount; ++r)
        CHECK(result.report.removed_by_rule[r] ==
              expected.at(std::string(kFilterRuleNames[r])).get<std::size_t>());

    // accounting identity
    std::size_t removed = 0;
    for (auto n : result.report.removed_by_rule) removed += n;
    CHECK(result.report.retained + removed == result.report.total);

    // idempotence: refiltering the retained corpus removes nothing
    std::size_t survivors = 0;
    for (const auto& d : result.retained)
        if (classify_dialogue(d, {}).retained) ++survivors;
    CHECK(survivors == result.retained.size());
}

TEST_CASE("every planted failure class classifies as planted", "[filters]") {
    const PromptTemplate tpl = default_prompt_template();
    const FilterThresholds thresholds;
    SplitMix64 seed_rng{0x1234};
    const SeedPost post =
        make_seed_post("plant", testutil::random_sentence(seed_rng, 14), "sad");

    const std::vector<std::pair<PlantClass, FilterRule>> table = {
        {PlantClass::NonDialogue, FilterRule::NonDialogue},
        {PlantClass::Unfinished, FilterRule::UnfinishedGeneration},
        {PlantClass::Leakage, FilterRule::PromptWordLeakage},
        {PlantClass::Unbalanced, FilterRule::UnbalancedUtterances},
        {PlantClass::Consecutive, FilterRule::ConsecutiveUtterances},
        {PlantClass::Total, FilterRule::TotalUtterances},
        {PlantClass::Length, FilterRule::UtteranceLength}};

    for (std::uint64_t rep = 0; rep < 25; ++rep) {
        for (const auto& [cls, rule] : table) {
            SplitMix64 rng{0x9000 + rep * 131 + static_cast<std::uint64_t>(cls)};
            SynthesizedCompletion s = synthesize_completion(rng, cls, tpl);
            RawCompletion c;
            c.seed_post_id = post.id;
            c.epoch = 1;
            c.generated_text = s.generated_text;
            c.finish_reason = s.finish_reason;
            auto outcome = parse_completion(post, c, tpl);
            if (!outcome.ok()) {
                CHECK(filter_rule_from_parse_failure(outcome.error().kind) == rule);
            } else {
                auto v = classify_dialogue(outcome.dialogue(), thresholds);
                REQUIRE_FALSE(v.retained);
                CHECK(v.rule == rule);
            }
        }
        // clean plants survive the whole chain
        SplitMix64 rng{0x8000 + rep};
        SynthesizedCompletion s = synthesize_completion(rng, PlantClass::Clean, tpl);
        RawCompletion c;
        c.seed_post_id = post.id;
        c.epoch = 1;
        c.generated_text = s.generated_text;
        c.finish_reason = s.finish_reason;
        auto outcome = parse_completion(post, c, tpl);
        REQUIRE(outcome.ok());
        CHECK(classify_dialogue(outcome.dialogue(), thresholds).retained);
    }
}

TEST_CASE("report merge adds counts", "[filters]") {
    FilterReport a;
    a.count(FilterRule::NonDialogue);
    a.count_retained();
    FilterReport b;
    b.count(FilterRule::NonDialogue);
    b.count(FilterRule::UtteranceLength);
    a.merge(b);
    CHECK(a.total == 4);
    CHECK(a.removed_by_rule[static_cast<std::size_t>(FilterRule::NonDialogue)] == 2);
    CHECK(a.retained == 1);
}

TEST_CASE("formatted report carries the published row labels", "[filters]") {
    FilterReport r;
    for (int i = 0; i < 73; ++i) r.count_retained();
    for (int i = 0; i < 27; ++i) r.count(FilterRule::UtteranceLength);
    const std::string text = format_filter_report(r);
    CHECK_THAT(text, Catch::Matchers::ContainsSubstring("Augmentation Failures"));
    CHECK_THAT(text, Catch::Matchers::ContainsSubstring("Harmful Self-reinforcement"));
    CHECK_THAT(text, Catch::Matchers::ContainsSubstring("Unbalanced # Utterances"));
    CHECK_THAT(text, Catch::Matchers::ContainsSubstring("Final Retention"));
    CHECK_THAT(text, Catch::Matchers::ContainsSubstring("73.0%"));
    CHECK_THAT(text, Catch::Matchers::ContainsSubstring("27.0%"));
}

TEST_CASE("unresolvable seed ids count as input errors", "[filters]") {
    RawCompletion c;
    c.seed_post_id = "missing";
    c.epoch = 1;
    c.generated_text = " hello there friend.";
    c.finish_reason = FinishReason::Eos;
    auto result = postprocess_corpus({c}, {}, default_prompt_template(), {});
    CHECK(result.report.input_errors == 1);
    CHECK(result.retained.empty());
}

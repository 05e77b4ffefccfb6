// Lexical salience between two tiny corpora: which words mark each side?
// Also prints distinct-2/-3 for the supporter role of the first corpus.

#include <cstdio>
#include <vector>

#include "chataug/analytics.hpp"

using namespace chataug;

namespace {

Dialogue two_turn(std::string id, std::string seeker, std::string supporter) {
    Dialogue d;
    d.id = std::move(id);
    d.seed_post_id = d.id;
    d.source = DialogueSource::Completion;
    d.utterances.push_back({Speaker::Seeker, std::move(seeker)});
    d.utterances.push_back({Speaker::Supporter, std::move(supporter)});
    return d;
}

std::vector<Dialogue> corpus_a() {
    return {
        two_turn("a0", "the pandemic cancelled my graduation and I am stuck at home",
                 "the pandemic has upended so many plans, that loss is real"),
        two_turn("a1", "working from home during the pandemic makes every day blur together",
                 "many people feel that way during the pandemic, routines can help"),
        two_turn("a2", "my vaccine appointment got postponed again and I am worried",
                 "waiting for a vaccine is stressful, it is okay to feel uneasy"),
        two_turn("a3", "remote school is exhausting and I miss seeing my classmates",
                 "remote everything is draining, missing people is a natural response"),
    };
}

std::vector<Dialogue> corpus_b() {
    return {
        two_turn("b0", "my guitar teacher says I am not improving and it stings",
                 "progress on an instrument comes in waves, the plateau will pass"),
        two_turn("b1", "I spilled coffee on my thesis draft the night before the deadline",
                 "what a moment for a spill, is the draft recoverable?"),
        two_turn("b2", "my garden flooded and the tomatoes I raised all summer are gone",
                 "losing a garden you tended all summer is a real grief"),
        two_turn("b3", "the hiking trip was rained out and it was our only week off",
                 "a ruined trip you waited for all year deserves some mourning"),
    };
}

}  // namespace

int main() {
    auto a = corpus_a();
    auto b = corpus_b();

    SalienceOptions opts;
    opts.top_k = 8;
    opts.stop_words = {"the", "a", "my", "i", "is", "and", "it", "that"};
    auto cmp = compare_salience(a, b, opts);

    std::printf("distinctive of corpus A:\n");
    for (const auto& e : cmp.top_a) std::printf("  %-12s z=%+.2f\n", e.term.c_str(), e.z);
    std::printf("distinctive of corpus B:\n");
    for (const auto& e : cmp.top_b) std::printf("  %-12s z=%+.2f\n", e.term.c_str(), e.z);

    std::printf("\nsupporter distinct-n of corpus A: d2=%.3f d3=%.3f\n",
                distinct_n(a, 2), distinct_n(a, 3));
    return 0;
}

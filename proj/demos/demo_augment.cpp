// End-to-end augmentation walkthrough on the mock backend: screen a handful
// of seed posts, sweep two epochs of completions, filter, and print what
// survived. Artifacts land under ./demo_out for inspection.

#include <cstdio>
#include <fstream>

#include "chataug/pipeline.hpp"

using namespace chataug;

namespace {

const char* kSeeds[][2] = {
    {"sad", "I lost my job last month and I feel like I let my whole family down"},
    {"anxious", "my exams start next week and I can not sleep or focus on anything at all"},
    {"sad", "my best friend moved across the country and the apartment feels so empty now"},
    {"angry", "my manager keeps taking credit for my work and nobody seems to notice it"},
    {"afraid", "the doctor wants more tests and I keep imagining the worst possible news"},
    {"sad", "we had to put our dog down yesterday and the house is unbearably quiet"},
    {"anxious", "I just moved to a new city for work and I have not made a single friend"},
    {"sad", "my parents are splitting up after thirty years and I do not know what to say"},
    {"angry", "my roommate never pays rent on time and I am tired of covering for him"},
    {"afraid", "I found a lump last week and my appointment is still ten days away"},
    {"anxious", "I have a presentation to the whole company tomorrow and my mind goes blank"},
    {"sad", "nobody remembered my birthday this year and I spent the evening alone"},
};

}  // namespace

int main() {
    std::filesystem::create_directories("demo_out");
    {
        std::ofstream seeds("demo_out/seeds.jsonl");
        int i = 0;
        for (const auto& [label, text] : kSeeds) {
            json row{{"id", "seed-" + std::to_string(i++)},
                     {"text", text},
                     {"emotion_label", label}};
            seeds << row.dump() << '\n';
        }
    }

    PipelineConfig cfg;
    cfg.paths.seeds = "demo_out/seeds.jsonl";
    cfg.paths.out_dir = "demo_out";
    cfg.generation.epochs = 2;
    cfg.generation.seed = 42;
    cfg.stages = {"ingest", "generate", "filter", "stats"};
    cmd_pipeline(cfg);

    std::printf("%s\n", read_text_file("demo_out/reports/filter_report.txt").c_str());

    auto corpus = load_jsonl<Dialogue>(cfg.paths.corpus_path());
    std::printf("retained %zu dialogues; first one:\n\n", corpus.size());
    if (!corpus.empty())
        std::printf("%s\n", render_dialogue(corpus.front(), cfg.prompt, false).c_str());

    const json stats = json::parse(read_text_file("demo_out/reports/stats.json"));
    std::printf("\ncorpus stats: %s\n", stats.dump(2).c_str());
    return 0;
}

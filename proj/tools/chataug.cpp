// chataug — corpus augmentation pipeline driver.
//
// Every subcommand maps onto one stage from chataug/pipeline.hpp and prints
// the stage's JSON report to stdout. Config file keys can be overridden by
// the global flags; anything not overridden keeps its built-in default, so
// `chataug pipeline --config run.json` and a bare `chataug ingest --seeds x`
// both work.

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "chataug/pipeline.hpp"

namespace {

struct GlobalArgs {
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
    bool out_dir_set = false;
};

void add_global_options(CLI::App& app, GlobalArgs& g) {
    app.add_option("--config", g.config_path, "pipeline config JSON")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "override generation.seed")
        ->each([&](const std::string&) { g.seed_set = true; });
    app.add_option("--out-dir", g.out_dir, "override paths.out_dir")
        ->each([&](const std::string&) { g.out_dir_set = true; });
}

chataug::PipelineConfig resolve_config(const GlobalArgs& g) {
    chataug::PipelineConfig cfg;
    if (!g.config_path.empty()) cfg = chataug::load_pipeline_config(g.config_path);
    if (g.seed_set) cfg.generation.seed = g.seed;
    if (g.out_dir_set) cfg.paths.out_dir = g.out_dir;
    const auto errors = cfg.validate();
    if (!errors.empty()) {
        std::fprintf(stderr, "invalid configuration:\n");
        for (const auto& e : errors) std::fprintf(stderr, "  - %s\n", e.c_str());
        std::exit(2);
    }
    return cfg;
}

void emit(const chataug::json& report) { std::printf("%s\n", report.dump(2).c_str()); }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"emotional-support dialogue augmentation pipeline"};
    app.require_subcommand(1);

    GlobalArgs g;
    add_global_options(app, g);

    // ingest
    std::string seeds_override;
    auto* ingest = app.add_subcommand("ingest", "screen seed posts into JSONL");
    add_global_options(*ingest, g);
    ingest->add_option("--seeds", seeds_override, "seed posts file (.csv or .jsonl)");

    // generate
    bool direct = false;
    auto* generate = app.add_subcommand("generate", "sweep seeds through the completion backend");
    add_global_options(*generate, g);
    generate->add_flag("--direct", direct, "single-epoch direct prompting (400 new tokens)");

    // simchat
    auto* simchat = app.add_subcommand("simchat", "two-backend simulated chat baseline");
    add_global_options(*simchat, g);

    // filter
    auto* filter = app.add_subcommand("filter", "postprocess raw completions into a corpus");
    add_global_options(*filter, g);

    // stats
    std::string corpus_override;
    bool drop_leading = false;
    auto* stats = app.add_subcommand("stats", "corpus statistics");
    add_global_options(*stats, g);
    stats->add_option("--corpus", corpus_override, "corpus JSONL (default: pipeline corpus)");
    stats->add_flag("--drop-leading-supporter", drop_leading,
                    "ignore supporter turns before the first seeker turn");

    // salience
    std::string corpus_a, corpus_b, name_a = "corpus_a", name_b = "corpus_b";
    auto* salience = app.add_subcommand("salience", "log-odds lexical salience between two corpora");
    add_global_options(*salience, g);
    salience->add_option("--corpus-a", corpus_a, "first corpus JSONL")->required();
    salience->add_option("--corpus-b", corpus_b, "second corpus JSONL")->required();
    salience->add_option("--name-a", name_a, "display name for corpus A");
    salience->add_option("--name-b", name_b, "display name for corpus B");

    // diversity
    auto* diversity = app.add_subcommand("diversity", "TF-IDF similarity histogram and PCA");
    add_global_options(*diversity, g);
    diversity->add_option("--corpus", corpus_override, "corpus JSONL (default: pipeline corpus)");

    // distinct
    auto* distinct = app.add_subcommand("distinct", "distinct-n lexical diversity");
    add_global_options(*distinct, g);
    distinct->add_option("--corpus", corpus_override, "corpus JSONL (default: pipeline corpus)");

    // toxicity
    auto* toxicity = app.add_subcommand("toxicity", "toxicity profile via detector API");
    add_global_options(*toxicity, g);
    toxicity->add_option("--corpus", corpus_override, "corpus JSONL (default: pipeline corpus)");

    // report
    bool drop_leading_a = false, drop_leading_b = false;
    auto* report = app.add_subcommand("report", "side-by-side comparison of two corpora");
    add_global_options(*report, g);
    report->add_option("--corpus-a", corpus_a, "first corpus JSONL")->required();
    report->add_option("--corpus-b", corpus_b, "second corpus JSONL")->required();
    report->add_option("--name-a", name_a, "display name for corpus A");
    report->add_option("--name-b", name_b, "display name for corpus B");
    report->add_flag("--drop-leading-supporter-a", drop_leading_a,
                     "drop leading supporter turns in corpus A stats");
    report->add_flag("--drop-leading-supporter-b", drop_leading_b,
                     "drop leading supporter turns in corpus B stats");

    // export-finetune
    auto* exportft = app.add_subcommand("export-finetune", "render corpus into fine-tuning JSONL");
    add_global_options(*exportft, g);
    exportft->add_option("--corpus", corpus_override, "corpus JSONL (default: pipeline corpus)");

    // pipeline
    std::vector<std::string> stages_override;
    auto* pipeline = app.add_subcommand("pipeline", "run the configured stages in order");
    add_global_options(*pipeline, g);
    pipeline->add_option("--stages", stages_override, "override the configured stage list");

    CLI11_PARSE(app, argc, argv);

    try {
        chataug::PipelineConfig cfg = resolve_config(g);
        if (!seeds_override.empty()) cfg.paths.seeds = seeds_override;
        if (direct) cfg.direct_prompt = true;
        if (drop_leading) cfg.analytics.drop_leading_supporter = true;
        const std::filesystem::path corpus = corpus_override.empty()
                                                 ? cfg.paths.corpus_path()
                                                 : std::filesystem::path(corpus_override);

        if (ingest->parsed()) {
            emit(chataug::stage_ingest(cfg));
        } else if (generate->parsed()) {
            emit(chataug::stage_generate(cfg));
        } else if (simchat->parsed()) {
            emit(chataug::stage_simchat(cfg));
        } else if (filter->parsed()) {
            emit(chataug::stage_filter(cfg));
        } else if (stats->parsed()) {
            emit(chataug::stage_stats(cfg, corpus));
        } else if (salience->parsed()) {
            emit(chataug::stage_salience(cfg, corpus_a, corpus_b, name_a, name_b));
        } else if (diversity->parsed()) {
            emit(chataug::stage_diversity(cfg, corpus));
        } else if (distinct->parsed()) {
            emit(chataug::stage_distinct(cfg, corpus));
        } else if (toxicity->parsed()) {
            emit(chataug::stage_toxicity(cfg, corpus));
        } else if (report->parsed()) {
            chataug::ReportInputs inputs;
            inputs.corpus_a = corpus_a;
            inputs.corpus_b = corpus_b;
            inputs.name_a = name_a;
            inputs.name_b = name_b;
            inputs.drop_leading_a = drop_leading_a;
            inputs.drop_leading_b = drop_leading_b;
            emit(chataug::cmd_report(cfg, inputs));
        } else if (exportft->parsed()) {
            emit(chataug::stage_export_finetune(cfg, corpus));
        } else if (pipeline->parsed()) {
            if (!stages_override.empty()) cfg.stages = stages_override;
            emit(chataug::cmd_pipeline(cfg));
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}

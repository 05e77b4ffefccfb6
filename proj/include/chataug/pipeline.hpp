#pragma once

// Configuration, stage runners, and report assembly behind the CLI. Every
// stage reads its inputs from disk, writes outputs atomically, and drops a
// JSON report beside them, so stages compose through the filesystem and a
// rerun with an unchanged config is a no-op.

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "chataug/analytics.hpp"
#include "chataug/core.hpp"
#include "chataug/filters.hpp"
#include "chataug/genloop.hpp"
#include "chataug/http_backend.hpp"
#include "chataug/ingest.hpp"
#include "chataug/io.hpp"
#include "chataug/mock_backend.hpp"
#include "chataug/prompt.hpp"
#include "chataug/rng.hpp"
#include "chataug/safety.hpp"

namespace chataug {

// ---------------------------------------------------------------------------
// Configuration

inline PromptTemplate default_prompt_template() {
    PromptTemplate tpl;
    tpl.task_description =
        "The following is a conversation with an emotional support specialist. The specialist "
        "listens to the other person's troubles, asks caring questions, and offers comfort, "
        "reassurance, and practical suggestions in a warm, non-judgmental tone.";
    return tpl;
}

inline BackendDescriptor default_backend_descriptor() {
    BackendDescriptor b;
    b.endpoint = "mock";
    b.model_label = "mock-backend";
    return b;
}

struct PipelinePaths {
    std::string seeds;
    std::string out_dir = "out";
    std::string screened;
    std::string raw_store;
    std::string manifest;
    std::string corpus;
    std::string simchat_corpus;
    std::string finetune;
    std::string reports_dir;

    std::filesystem::path out() const { return out_dir; }
    std::filesystem::path screened_path() const {
        return screened.empty() ? out() / "seeds_screened.jsonl" : std::filesystem::path(screened);
    }
    std::filesystem::path raw_store_path() const {
        return raw_store.empty() ? out() / "raw_completions.jsonl" : std::filesystem::path(raw_store);
    }
    std::filesystem::path manifest_path() const {
        return manifest.empty() ? out() / "manifest.jsonl" : std::filesystem::path(manifest);
    }
    std::filesystem::path corpus_path() const {
        return corpus.empty() ? out() / "corpus.jsonl" : std::filesystem::path(corpus);
    }
    std::filesystem::path simchat_corpus_path() const {
        return simchat_corpus.empty() ? out() / "simchat_corpus.jsonl"
                                      : std::filesystem::path(simchat_corpus);
    }
    std::filesystem::path finetune_path() const {
        return finetune.empty() ? out() / "finetune.jsonl" : std::filesystem::path(finetune);
    }
    std::filesystem::path reports() const {
        return reports_dir.empty() ? out() / "reports" : std::filesystem::path(reports_dir);
    }
};

inline void to_json(json& j, const PipelinePaths& p) {
    j = json{{"seeds", p.seeds},
             {"out_dir", p.out_dir},
             {"screened", p.screened},
             {"raw_store", p.raw_store},
             {"manifest", p.manifest},
             {"corpus", p.corpus},
             {"simchat_corpus", p.simchat_corpus},
             {"finetune", p.finetune},
             {"reports_dir", p.reports_dir}};
}

inline void from_json(const json& j, PipelinePaths& p) {
    p.seeds = j.value("seeds", p.seeds);
    p.out_dir = j.value("out_dir", p.out_dir);
    p.screened = j.value("screened", p.screened);
    p.raw_store = j.value("raw_store", p.raw_store);
    p.manifest = j.value("manifest", p.manifest);
    p.corpus = j.value("corpus", p.corpus);
    p.simchat_corpus = j.value("simchat_corpus", p.simchat_corpus);
    p.finetune = j.value("finetune", p.finetune);
    p.reports_dir = j.value("reports_dir", p.reports_dir);
}

struct AnalyticsOptions {
    std::size_t sample = 1300;  // dialogues per corpus for salience/diversity; 0 = all
    std::size_t histogram_bins = 50;
    bool lowercase = true;
    std::size_t min_combined_count = 2;
    std::vector<std::string> stop_words;
    double alpha0 = 1000.0;
    std::size_t top_k = 30;
    std::string distinct_scope = "supporter";  // "supporter" | "all"
    std::vector<std::size_t> distinct_n = {2, 3};
    bool svg = true;
    bool drop_leading_supporter = false;
};

inline void to_json(json& j, const AnalyticsOptions& a) {
    j = json{{"sample", a.sample},
             {"histogram_bins", a.histogram_bins},
             {"lowercase", a.lowercase},
             {"min_combined_count", a.min_combined_count},
             {"stop_words", a.stop_words},
             {"alpha0", a.alpha0},
             {"top_k", a.top_k},
             {"distinct_scope", a.distinct_scope},
             {"distinct_n", a.distinct_n},
             {"svg", a.svg},
             {"drop_leading_supporter", a.drop_leading_supporter}};
}

inline void from_json(const json& j, AnalyticsOptions& a) {
    a.sample = j.value("sample", a.sample);
    a.histogram_bins = j.value("histogram_bins", a.histogram_bins);
    a.lowercase = j.value("lowercase", a.lowercase);
    a.min_combined_count = j.value("min_combined_count", a.min_combined_count);
    a.stop_words = j.value("stop_words", a.stop_words);
    a.alpha0 = j.value("alpha0", a.alpha0);
    a.top_k = j.value("top_k", a.top_k);
    a.distinct_scope = j.value("distinct_scope", a.distinct_scope);
    a.distinct_n = j.value("distinct_n", a.distinct_n);
    a.svg = j.value("svg", a.svg);
    a.drop_leading_supporter = j.value("drop_leading_supporter", a.drop_leading_supporter);
}

struct ToxicityOptions {
    std::string endpoint = "mock";  // "mock" or an http(s) URL
    double mock_score = 0.1;
    std::string auth_token_env = "TOXICITY_API_TOKEN";
    double rate_limit_rps = 0.0;  // 0 = unpaced
    std::size_t request_timeout_ms = 30000;
    std::size_t max_retries = 2;
};

inline void to_json(json& j, const ToxicityOptions& t) {
    j = json{{"endpoint", t.endpoint},
             {"mock_score", t.mock_score},
             {"auth_token_env", t.auth_token_env},
             {"rate_limit_rps", t.rate_limit_rps},
             {"request_timeout_ms", t.request_timeout_ms},
             {"max_retries", t.max_retries}};
}

inline void from_json(const json& j, ToxicityOptions& t) {
    t.endpoint = j.value("endpoint", t.endpoint);
    t.mock_score = j.value("mock_score", t.mock_score);
    t.auth_token_env = j.value("auth_token_env", t.auth_token_env);
    t.rate_limit_rps = j.value("rate_limit_rps", t.rate_limit_rps);
    t.request_timeout_ms = j.value("request_timeout_ms", t.request_timeout_ms);
    t.max_retries = j.value("max_retries", t.max_retries);
}

inline const std::set<std::string>& known_stage_names() {
    static const std::set<std::string> names = {"ingest",  "generate", "simchat",
                                                "filter",  "stats",    "diversity",
                                                "distinct", "toxicity", "export-finetune"};
    return names;
}

struct PipelineConfig {
    PipelinePaths paths;
    std::string run_id = "run";
    PromptTemplate prompt = default_prompt_template();
    SeedScreeningConfig screening;
    SeedRecordFields seed_fields;
    GenerationParams generation;
    BackendDescriptor backend = default_backend_descriptor();
    MockFailureRates mock_rates;
    std::size_t parallelism = 4;
    bool direct_prompt = false;  // run_direct_prompt instead of the epoch sweep
    FilterThresholds filters;
    AnalyticsOptions analytics;
    ToxicityOptions toxicity;
    std::size_t simchat_max_utterances = 40;
    std::string simchat_stop_word = "bye";
    std::vector<std::string> stages = {"ingest", "generate", "filter", "stats"};

    /// Field-level validation messages; empty means the config is usable.
    std::vector<std::string> validate() const {
        std::vector<std::string> errors;
        auto attempt = [&](auto&& fn) {
            try {
                fn();
            } catch (const std::exception& e) {
                errors.emplace_back(e.what());
            }
        };
        attempt([&] { prompt.validate(); });
        attempt([&] { screening.validate(); });
        attempt([&] { generation.validate(); });
        attempt([&] { filters.validate(); });
        attempt([&] { mock_rates.validate(); });
        if (run_id.empty()) errors.emplace_back("run_id must be non-empty");
        if (parallelism == 0) errors.emplace_back("parallelism must be >= 1");
        if (backend.endpoint.empty()) errors.emplace_back("backend.endpoint must be non-empty");
        if (analytics.histogram_bins == 0)
            errors.emplace_back("analytics.histogram_bins must be >= 1");
        if (!(analytics.alpha0 > 0)) errors.emplace_back("analytics.alpha0 must be positive");
        if (analytics.top_k == 0) errors.emplace_back("analytics.top_k must be >= 1");
        if (analytics.min_combined_count == 0)
            errors.emplace_back("analytics.min_combined_count must be >= 1");
        if (analytics.distinct_scope != "supporter" && analytics.distinct_scope != "all")
            errors.emplace_back("analytics.distinct_scope must be \"supporter\" or \"all\"");
        for (auto n : analytics.distinct_n)
            if (n == 0) errors.emplace_back("analytics.distinct_n entries must be >= 1");
        if (toxicity.rate_limit_rps < 0)
            errors.emplace_back("toxicity.rate_limit_rps must be >= 0");
        if (simchat_max_utterances < 2)
            errors.emplace_back("simchat_max_utterances must be >= 2");
        if (simchat_stop_word.empty()) errors.emplace_back("simchat_stop_word must be non-empty");
        for (const auto& s : stages)
            if (!known_stage_names().contains(s)) errors.emplace_back("stages: unknown stage \"" + s + "\"");
        return errors;
    }

    void ensure_valid() const {
        auto errors = validate();
        if (errors.empty()) return;
        std::string msg = "invalid configuration:";
        for (const auto& e : errors) msg += "\n  - " + e;
        throw std::invalid_argument(msg);
    }
};

inline void to_json(json& j, const PromptTemplate& t) {
    j = json{{"task_description", t.task_description},
             {"seeker_prefix", t.seeker_prefix},
             {"supporter_prefix", t.supporter_prefix},
             {"turn_separator", t.turn_separator}};
}

inline void from_json(const json& j, PromptTemplate& t) {
    t.task_description = j.value("task_description", t.task_description);
    t.seeker_prefix = j.value("seeker_prefix", t.seeker_prefix);
    t.supporter_prefix = j.value("supporter_prefix", t.supporter_prefix);
    t.turn_separator = j.value("turn_separator", t.turn_separator);
}

inline void to_json(json& j, const SeedRecordFields& f) {
    j = json{{"id", f.id}, {"text", f.text}, {"emotion_label", f.emotion_label}};
}

inline void from_json(const json& j, SeedRecordFields& f) {
    f.id = j.value("id", f.id);
    f.text = j.value("text", f.text);
    f.emotion_label = j.value("emotion_label", f.emotion_label);
}

inline void to_json(json& j, const SeedScreeningConfig& c) {
    j = json{{"negative_labels", c.negative_labels}, {"min_len", c.min_len}, {"max_len", c.max_len}};
}

inline void from_json(const json& j, SeedScreeningConfig& c) {
    c.negative_labels = j.value("negative_labels", c.negative_labels);
    c.min_len = j.value("min_len", c.min_len);
    c.max_len = j.value("max_len", c.max_len);
}

inline void to_json(json& j, const PipelineConfig& c) {
    j = json{{"paths", c.paths},
             {"run_id", c.run_id},
             {"template", c.prompt},
             {"screening", c.screening},
             {"seed_fields", c.seed_fields},
             {"generation", c.generation},
             {"backend", c.backend},
             {"mock_rates", c.mock_rates},
             {"parallelism", c.parallelism},
             {"direct_prompt", c.direct_prompt},
             {"filters", c.filters},
             {"analytics", c.analytics},
             {"toxicity", c.toxicity},
             {"simchat_max_utterances", c.simchat_max_utterances},
             {"simchat_stop_word", c.simchat_stop_word},
             {"stages", c.stages}};
}

inline void from_json(const json& j, PipelineConfig& c) {
    if (j.contains("paths")) j.at("paths").get_to(c.paths);
    c.run_id = j.value("run_id", c.run_id);
    if (j.contains("template")) j.at("template").get_to(c.prompt);
    if (j.contains("screening")) j.at("screening").get_to(c.screening);
    if (j.contains("seed_fields")) j.at("seed_fields").get_to(c.seed_fields);
    if (j.contains("generation")) j.at("generation").get_to(c.generation);
    if (j.contains("backend")) j.at("backend").get_to(c.backend);
    if (j.contains("mock_rates")) j.at("mock_rates").get_to(c.mock_rates);
    c.parallelism = j.value("parallelism", c.parallelism);
    c.direct_prompt = j.value("direct_prompt", c.direct_prompt);
    if (j.contains("filters")) j.at("filters").get_to(c.filters);
    if (j.contains("analytics")) j.at("analytics").get_to(c.analytics);
    if (j.contains("toxicity")) j.at("toxicity").get_to(c.toxicity);
    c.simchat_max_utterances = j.value("simchat_max_utterances", c.simchat_max_utterances);
    c.simchat_stop_word = j.value("simchat_stop_word", c.simchat_stop_word);
    c.stages = j.value("stages", c.stages);
}

inline PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
    json j = json::parse(read_text_file(path));
    PipelineConfig cfg;
    j.get_to(cfg);
    return cfg;
}

/// The effective config is archived beside a run's outputs.
inline void archive_config(const PipelineConfig& cfg) {
    std::filesystem::create_directories(cfg.paths.out());
    write_json_file_atomic(cfg.paths.out() / "config.effective.json", json(cfg));
}

// ---------------------------------------------------------------------------
// Shared helpers

inline std::unique_ptr<CompletionBackend> make_completion_backend(const PipelineConfig& cfg) {
    if (cfg.backend.endpoint.starts_with("http://") || cfg.backend.endpoint.starts_with("https://"))
        return std::make_unique<HttpCompletionBackend>(cfg.backend);
    return std::make_unique<MockCompletionBackend>(
        cfg.prompt, cfg.mock_rates,
        cfg.backend.model_label.empty() ? "mock-backend" : cfg.backend.model_label);
}

template <typename T>
std::vector<T> load_jsonl_checked(const std::filesystem::path& path, std::string_view what) {
    if (!std::filesystem::exists(path))
        throw std::runtime_error(std::string(what) + " not found: " + path.string() +
                                 " (run the producing stage first)");
    return load_jsonl<T>(path);
}

/// Raw-store reader that tolerates a torn trailing line (interrupted
/// generate run); corruption anywhere else still throws.
inline std::vector<RawCompletion> load_raw_store(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path))
        throw std::runtime_error("raw completion store not found: " + path.string() +
                                 " (run generate first)");
    const std::string content = read_text_file(path);
    std::vector<RawCompletion> out;
    std::size_t pos = 0;
    while (pos < content.size()) {
        const auto nl = content.find('\n', pos);
        const bool terminated = nl != std::string::npos;
        const std::string_view line(content.data() + pos, (terminated ? nl : content.size()) - pos);
        if (!line.empty()) {
            try {
                out.push_back(json::parse(line).get<RawCompletion>());
            } catch (const std::exception&) {
                if (terminated)
                    throw std::runtime_error("corrupt line in raw store " + path.string());
                break;  // torn trailing line from an interrupted run
            }
        }
        if (!terminated) break;
        pos = nl + 1;
    }
    return out;
}

/// Seeded partial Fisher-Yates; `k = 0` or `k >= size` keeps everything.
inline std::vector<Dialogue> sample_dialogues(std::vector<Dialogue> corpus, std::size_t k,
                                              std::uint64_t seed) {
    if (k == 0 || corpus.size() <= k) return corpus;
    SplitMix64 rng{fnv1a64("corpus-sample") ^ (seed * 0x9E3779B97F4A7C15ull + 1)};
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + rng.below(corpus.size() - i);
        std::swap(corpus[i], corpus[j]);
    }
    corpus.resize(k);
    return corpus;
}

namespace detail {

inline std::string format_double(double v, int decimals = 9) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", decimals, v);
    return buf;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// CSV / SVG artifacts

inline std::string histogram_csv(const Histogram& h) {
    std::string out = "bin_lo,bin_hi,count\n";
    for (std::size_t b = 0; b < h.bins; ++b) {
        out += detail::format_double(h.bin_lo(b));
        out += ',';
        out += detail::format_double(h.bin_hi(b));
        out += ',';
        out += std::to_string(h.counts[b]);
        out += '\n';
    }
    return out;
}

struct ScatterPoint {
    std::string id;
    std::string group;
    double x = 0.0;
    double y = 0.0;
};

inline std::string scatter_csv(const std::vector<ScatterPoint>& points, bool with_group) {
    std::string out = with_group ? "id,corpus,x,y\n" : "id,x,y\n";
    for (const auto& p : points) {
        out += p.id;
        if (with_group) {
            out += ',';
            out += p.group;
        }
        out += ',';
        out += detail::format_double(p.x);
        out += ',';
        out += detail::format_double(p.y);
        out += '\n';
    }
    return out;
}

inline std::string histogram_svg(const Histogram& h, std::string_view title) {
    const double width = 640, height = 400, ml = 50, mr = 15, mt = 30, mb = 35;
    const double pw = width - ml - mr, ph = height - mt - mb;
    std::size_t max_count = 1;
    for (auto c : h.counts) max_count = std::max(max_count, c);
    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" "
           "viewBox=\"0 0 640 400\">\n";
    svg += "<rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
    svg += "<text x=\"320\" y=\"18\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"14\">" + std::string(title) + "</text>\n";
    for (std::size_t b = 0; b < h.bins; ++b) {
        const double x = ml + pw * static_cast<double>(b) / static_cast<double>(h.bins);
        const double w = pw / static_cast<double>(h.bins);
        const double bh = ph * static_cast<double>(h.counts[b]) / static_cast<double>(max_count);
        svg += "<rect x=\"" + detail::format_double(x, 6) + "\" y=\"" +
               detail::format_double(mt + ph - bh, 6) + "\" width=\"" +
               detail::format_double(w, 6) + "\" height=\"" + detail::format_double(bh, 6) +
               "\" fill=\"#4878a8\" stroke=\"white\" stroke-width=\"0.5\"/>\n";
    }
    svg += "<line x1=\"" + detail::format_double(ml, 6) + "\" y1=\"" +
           detail::format_double(mt + ph, 6) + "\" x2=\"" + detail::format_double(ml + pw, 6) +
           "\" y2=\"" + detail::format_double(mt + ph, 6) + "\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 4; ++t) {
        const double frac = t / 4.0;
        svg += "<text x=\"" + detail::format_double(ml + pw * frac, 6) + "\" y=\"" +
               detail::format_double(height - 12, 6) +
               "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" +
               detail::format_double(frac, 3) + "</text>\n";
    }
    svg += "<text x=\"12\" y=\"" + detail::format_double(mt + 8, 6) +
           "\" font-family=\"sans-serif\" font-size=\"11\">" + std::to_string(max_count) +
           "</text>\n";
    svg += "</svg>\n";
    return svg;
}

inline std::string scatter_svg(const std::vector<ScatterPoint>& points, std::string_view title) {
    const double width = 640, height = 480, ml = 50, mr = 15, mt = 30, mb = 35;
    const double pw = width - ml - mr, ph = height - mt - mb;
    double min_x = 0, max_x = 0, min_y = 0, max_y = 0;
    bool first = true;
    for (const auto& p : points) {
        if (first) {
            min_x = max_x = p.x;
            min_y = max_y = p.y;
            first = false;
        }
        min_x = std::min(min_x, p.x);
        max_x = std::max(max_x, p.x);
        min_y = std::min(min_y, p.y);
        max_y = std::max(max_y, p.y);
    }
    const double span_x = max_x - min_x > 0 ? max_x - min_x : 1.0;
    const double span_y = max_y - min_y > 0 ? max_y - min_y : 1.0;
    std::vector<std::string> groups;
    for (const auto& p : points)
        if (std::find(groups.begin(), groups.end(), p.group) == groups.end())
            groups.push_back(p.group);
    const std::array<std::string_view, 2> palette = {"#d1604d", "#4878a8"};
    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"480\" "
           "viewBox=\"0 0 640 480\">\n";
    svg += "<rect width=\"640\" height=\"480\" fill=\"white\"/>\n";
    svg += "<text x=\"320\" y=\"18\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"14\">" + std::string(title) + "</text>\n";
    for (const auto& p : points) {
        const double cx = ml + pw * (p.x - min_x) / span_x;
        const double cy = mt + ph - ph * (p.y - min_y) / span_y;
        std::size_t gi = 0;
        for (std::size_t g = 0; g < groups.size(); ++g)
            if (groups[g] == p.group) gi = g;
        svg += "<circle cx=\"" + detail::format_double(cx, 6) + "\" cy=\"" +
               detail::format_double(cy, 6) + "\" r=\"2.4\" fill=\"" +
               std::string(palette[gi % palette.size()]) + "\" fill-opacity=\"0.55\"/>\n";
    }
    double ly = mt + 10;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        svg += "<circle cx=\"" + detail::format_double(ml + 10, 6) + "\" cy=\"" +
               detail::format_double(ly - 4, 6) + "\" r=\"4\" fill=\"" +
               std::string(palette[g % palette.size()]) + "\"/>\n";
        svg += "<text x=\"" + detail::format_double(ml + 20, 6) + "\" y=\"" +
               detail::format_double(ly, 6) +
               "\" font-family=\"sans-serif\" font-size=\"12\">" + groups[g] + "</text>\n";
        ly += 18;
    }
    svg += "</svg>\n";
    return svg;
}

// ---------------------------------------------------------------------------
// Stages

inline json stage_ingest(const PipelineConfig& cfg) {
    if (cfg.paths.seeds.empty())
        throw std::runtime_error("ingest: paths.seeds is not configured");
    const std::filesystem::path seeds = cfg.paths.seeds;
    if (!std::filesystem::exists(seeds))
        throw std::runtime_error("ingest: seeds file not found: " + seeds.string());
    std::ifstream in(seeds);
    if (!in) throw std::runtime_error("ingest: cannot open " + seeds.string());
    auto result = load_seed_posts(in, seed_format_from_path(seeds), cfg.seed_fields, cfg.screening);

    std::filesystem::create_directories(cfg.paths.out());
    std::filesystem::create_directories(cfg.paths.reports());
    write_jsonl_atomic(cfg.paths.screened_path(), result.posts);
    json report{{"input", seeds.string()},
                {"screened", cfg.paths.screened_path().string()},
                {"screening", result.report}};
    write_json_file_atomic(cfg.paths.reports() / "ingest_report.json", report);
    return report;
}

inline json stage_generate(const PipelineConfig& cfg) {
    auto posts = load_jsonl_checked<SeedPost>(cfg.paths.screened_path(), "screened seed posts");
    if (posts.empty()) throw std::runtime_error("generate: no screened seed posts to sweep");
    std::vector<std::string> ids;
    ids.reserve(posts.size());
    for (const auto& p : posts) ids.push_back(p.id);

    GenerationParams params = cfg.generation;
    if (cfg.direct_prompt) {
        params.max_new_tokens = 400;
        params.epochs = 1;
    }
    auto backend = make_completion_backend(cfg);
    std::filesystem::create_directories(cfg.paths.out());
    std::filesystem::create_directories(cfg.paths.reports());
    ManifestJournal manifest(cfg.paths.manifest_path(), cfg.paths.raw_store_path(), cfg.run_id,
                             std::move(ids), static_cast<std::size_t>(params.epochs), params);
    AugmentationOptions opts;
    opts.parallelism = cfg.parallelism;
    const AugmentationSummary summary =
        cfg.direct_prompt ? run_direct_prompt(posts, cfg.prompt, cfg.generation, *backend, manifest, opts)
                          : run_augmentation(posts, cfg.prompt, params, *backend, manifest, opts);

    json report{{"store", cfg.paths.raw_store_path().string()},
                {"manifest", cfg.paths.manifest_path().string()},
                {"backend", backend->label()},
                {"direct_prompt", cfg.direct_prompt},
                {"posts", posts.size()},
                {"epochs", params.epochs},
                {"emitted", summary.emitted},
                {"already_complete", summary.already_complete},
                {"backend_errors", summary.backend_errors},
                {"total_pairs", manifest.total_pairs()},
                {"finished", manifest.finished()}};
    write_json_file_atomic(cfg.paths.reports() / "generate_report.json", report);
    return report;
}

inline json stage_simchat(const PipelineConfig& cfg) {
    auto posts = load_jsonl_checked<SeedPost>(cfg.paths.screened_path(), "screened seed posts");
    if (posts.empty()) throw std::runtime_error("simchat: no screened seed posts");
    auto seeker_backend = make_completion_backend(cfg);
    auto supporter_backend = make_completion_backend(cfg);
    std::vector<Dialogue> corpus;
    corpus.reserve(posts.size());
    std::size_t backend_failures = 0;
    for (const auto& p : posts) {
        Dialogue d = simulate_chat(p, cfg.prompt, *seeker_backend, *supporter_backend,
                                   cfg.generation, cfg.simchat_max_utterances, cfg.simchat_stop_word);
        if (auto it = d.meta.find("stopped_by"); it != d.meta.end() && it->second == "backend_error")
            ++backend_failures;
        corpus.push_back(std::move(d));
    }
    std::filesystem::create_directories(cfg.paths.out());
    std::filesystem::create_directories(cfg.paths.reports());
    write_jsonl_atomic(cfg.paths.simchat_corpus_path(), corpus);
    json report{{"corpus", cfg.paths.simchat_corpus_path().string()},
                {"dialogues", corpus.size()},
                {"backend_failures", backend_failures}};
    write_json_file_atomic(cfg.paths.reports() / "simchat_report.json", report);
    return report;
}

inline json stage_filter(const PipelineConfig& cfg) {
    auto posts = load_jsonl_checked<SeedPost>(cfg.paths.screened_path(), "screened seed posts");
    auto completions = load_raw_store(cfg.paths.raw_store_path());
    auto result = postprocess_corpus(completions, posts, cfg.prompt, cfg.filters);

    std::filesystem::create_directories(cfg.paths.out());
    std::filesystem::create_directories(cfg.paths.reports());
    write_jsonl_atomic(cfg.paths.corpus_path(), result.retained);
    json report{{"store", cfg.paths.raw_store_path().string()},
                {"corpus", cfg.paths.corpus_path().string()},
                {"report", result.report}};
    write_json_file_atomic(cfg.paths.reports() / "filter_report.json", report);
    write_text_file_atomic(cfg.paths.reports() / "filter_report.txt",
                           format_filter_report(result.report));
    return report;
}

inline json stage_stats(const PipelineConfig& cfg, const std::filesystem::path& corpus_path) {
    auto corpus = load_jsonl_checked<Dialogue>(corpus_path, "corpus");
    const CorpusStats stats = corpus_stats(corpus, cfg.analytics.drop_leading_supporter);
    std::filesystem::create_directories(cfg.paths.reports());
    json report{{"corpus", corpus_path.string()},
                {"drop_leading_supporter", cfg.analytics.drop_leading_supporter},
                {"stats", stats}};
    write_json_file_atomic(cfg.paths.reports() / "stats.json", report);
    return report;
}

inline json stage_stats(const PipelineConfig& cfg) { return stage_stats(cfg, cfg.paths.corpus_path()); }

inline SalienceOptions salience_options(const PipelineConfig& cfg) {
    SalienceOptions opts;
    opts.lowercase = cfg.analytics.lowercase;
    opts.min_combined_count = cfg.analytics.min_combined_count;
    opts.stop_words.insert(cfg.analytics.stop_words.begin(), cfg.analytics.stop_words.end());
    opts.alpha0 = cfg.analytics.alpha0;
    opts.top_k = cfg.analytics.top_k;
    return opts;
}

/// "term (z)" with one decimal; adding 0.0 folds negative zero away.
inline std::string salience_label(const SalienceEntry& e) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), " (%.1f)", e.z + 0.0);
    return e.term + buf;
}

inline json stage_salience(const PipelineConfig& cfg, const std::filesystem::path& corpus_a,
                           const std::filesystem::path& corpus_b, const std::string& name_a,
                           const std::string& name_b) {
    auto a = sample_dialogues(load_jsonl_checked<Dialogue>(corpus_a, "corpus A"),
                              cfg.analytics.sample, cfg.generation.seed ^ fnv1a64("salience-a"));
    auto b = sample_dialogues(load_jsonl_checked<Dialogue>(corpus_b, "corpus B"),
                              cfg.analytics.sample, cfg.generation.seed ^ fnv1a64("salience-b"));
    const SalienceComparison comp = compare_salience(a, b, salience_options(cfg));

    json report{{"corpus_a", corpus_a.string()}, {"corpus_b", corpus_b.string()},
                {"name_a", name_a},              {"name_b", name_b},
                {"sampled_a", a.size()},         {"sampled_b", b.size()},
                {"top_a", comp.top_a},           {"top_b", comp.top_b}};
    std::string text;
    text += name_a + " salient terms (z):\n";
    for (const auto& e : comp.top_a) text += "  " + salience_label(e) + "\n";
    text += "\n" + name_b + " salient terms (z):\n";
    for (const auto& e : comp.top_b) text += "  " + salience_label(e) + "\n";

    std::filesystem::create_directories(cfg.paths.reports());
    write_json_file_atomic(cfg.paths.reports() / "salience.json", report);
    write_text_file_atomic(cfg.paths.reports() / "salience.txt", text);
    return report;
}

inline json stage_diversity(const PipelineConfig& cfg, const std::filesystem::path& corpus_path) {
    auto corpus = sample_dialogues(load_jsonl_checked<Dialogue>(corpus_path, "corpus"),
                                   cfg.analytics.sample, cfg.generation.seed ^ fnv1a64("diversity"));
    if (corpus.size() < 3)
        throw std::runtime_error("diversity: need at least 3 dialogues, have " +
                                 std::to_string(corpus.size()));
    const TfidfMatrix m = tfidf_matrix(corpus, cfg.analytics.lowercase);
    const Histogram hist = pairwise_similarity_histogram(m, cfg.analytics.histogram_bins);
    const Pca2d pca = pca_2d(m);

    std::vector<ScatterPoint> points;
    points.reserve(corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i)
        points.push_back({corpus[i].id, "", pca.scores[i][0], pca.scores[i][1]});

    std::filesystem::create_directories(cfg.paths.reports());
    write_text_file_atomic(cfg.paths.reports() / "similarity_histogram.csv", histogram_csv(hist));
    write_text_file_atomic(cfg.paths.reports() / "pca.csv", scatter_csv(points, false));
    if (cfg.analytics.svg) {
        write_text_file_atomic(cfg.paths.reports() / "similarity_histogram.svg",
                               histogram_svg(hist, "TF-IDF pairwise cosine similarity"));
        write_text_file_atomic(cfg.paths.reports() / "pca.svg", scatter_svg(points, "PCA of TF-IDF vectors"));
    }
    json report{{"corpus", corpus_path.string()},
                {"sampled", corpus.size()},
                {"vocabulary", m.vocab.size()},
                {"pairs", hist.samples},
                {"histogram", hist},
                {"explained_variance", pca.explained_variance}};
    write_json_file_atomic(cfg.paths.reports() / "diversity_report.json", report);
    return report;
}

inline json stage_diversity(const PipelineConfig& cfg) {
    return stage_diversity(cfg, cfg.paths.corpus_path());
}

inline json stage_distinct(const PipelineConfig& cfg, const std::filesystem::path& corpus_path) {
    auto corpus = load_jsonl_checked<Dialogue>(corpus_path, "corpus");
    const DistinctScope scope = cfg.analytics.distinct_scope == "all" ? DistinctScope::All
                                                                      : DistinctScope::Supporter;
    json values;
    for (auto n : cfg.analytics.distinct_n)
        values[std::to_string(n)] = distinct_n(corpus, n, scope);
    json report{{"corpus", corpus_path.string()},
                {"scope", cfg.analytics.distinct_scope},
                {"distinct", values}};
    std::filesystem::create_directories(cfg.paths.reports());
    write_json_file_atomic(cfg.paths.reports() / "distinct.json", report);
    return report;
}

inline json stage_distinct(const PipelineConfig& cfg) {
    return stage_distinct(cfg, cfg.paths.corpus_path());
}

inline json stage_toxicity(const PipelineConfig& cfg, const std::filesystem::path& corpus_path) {
    auto corpus = load_jsonl_checked<Dialogue>(corpus_path, "corpus");
    std::unique_ptr<ToxicityClient> client;
    if (cfg.toxicity.endpoint.starts_with("http://") ||
        cfg.toxicity.endpoint.starts_with("https://")) {
        client = std::make_unique<HttpToxicityClient>(HttpToxicityClient::Options{
            cfg.toxicity.endpoint, cfg.toxicity.auth_token_env, cfg.toxicity.request_timeout_ms,
            cfg.toxicity.max_retries});
    } else {
        client = std::make_unique<MockToxicityClient>(cfg.toxicity.mock_score);
    }
    const ToxicityProfile profile = assess_toxicity(corpus, *client, cfg.toxicity.rate_limit_rps);
    json report{{"corpus", corpus_path.string()},
                {"endpoint", cfg.toxicity.endpoint},
                {"profile", profile}};
    std::filesystem::create_directories(cfg.paths.reports());
    write_json_file_atomic(cfg.paths.reports() / "toxicity.json", report);
    return report;
}

inline json stage_toxicity(const PipelineConfig& cfg) {
    return stage_toxicity(cfg, cfg.paths.corpus_path());
}

inline json stage_export_finetune(const PipelineConfig& cfg,
                                  const std::filesystem::path& corpus_path) {
    auto corpus = load_jsonl_checked<Dialogue>(corpus_path, "corpus");
    std::vector<FinetuneRecord> records;
    records.reserve(corpus.size());
    for (const auto& d : corpus) records.push_back(export_finetune_record(d, cfg.prompt));
    std::filesystem::create_directories(cfg.paths.out());
    write_jsonl_atomic(cfg.paths.finetune_path(), records);
    json report{{"corpus", corpus_path.string()},
                {"out", cfg.paths.finetune_path().string()},
                {"records", records.size()}};
    std::filesystem::create_directories(cfg.paths.reports());
    write_json_file_atomic(cfg.paths.reports() / "export_finetune_report.json", report);
    return report;
}

inline json stage_export_finetune(const PipelineConfig& cfg) {
    return stage_export_finetune(cfg, cfg.paths.corpus_path());
}

// ---------------------------------------------------------------------------
// Comparison report (stats side by side, salience lists, diversity artifacts)

namespace detail {

inline std::string stats_table(const CorpusStats& a, const CorpusStats& b,
                               const std::string& name_a, const std::string& name_b) {
    std::string out;
    char buf[128];
    auto header = [&] {
        std::snprintf(buf, sizeof(buf), "%-28s %14s %14s\n", "", name_a.c_str(), name_b.c_str());
        out += buf;
        out += std::string(58, '-') + "\n";
    };
    auto row_count = [&](const char* label, std::size_t va, std::size_t vb, int indent) {
        std::snprintf(buf, sizeof(buf), "%-*s%-*s %14zu %14zu\n", indent, "", 28 - indent, label,
                      va, vb);
        out += buf;
    };
    auto row_avg = [&](const char* label, double va, double vb, int indent) {
        std::snprintf(buf, sizeof(buf), "%-*s%-*s %14.1f %14.1f\n", indent, "", 28 - indent, label,
                      va, vb);
        out += buf;
    };
    header();
    row_count("# Sessions", a.sessions, b.sessions, 0);
    row_avg("Average Session Length", a.avg_session_tokens, b.avg_session_tokens, 0);
    row_count("# Utterances", a.total_utterances, b.total_utterances, 0);
    row_avg("Average # Utterances", a.avg_utterances_per_session, b.avg_utterances_per_session, 0);
    row_avg("Average Utterance Length", a.avg_utterance_tokens, b.avg_utterance_tokens, 0);
    out += "Seeker\n";
    row_count("# Utterances", a.seeker.utterances, b.seeker.utterances, 2);
    row_avg("Avg # Uttr", a.seeker.avg_per_session, b.seeker.avg_per_session, 2);
    row_avg("Avg Uttr Len", a.seeker.avg_tokens, b.seeker.avg_tokens, 2);
    out += "Supporter\n";
    row_count("# Utterances", a.supporter.utterances, b.supporter.utterances, 2);
    row_avg("Avg # Uttr", a.supporter.avg_per_session, b.supporter.avg_per_session, 2);
    row_avg("Avg Uttr Len", a.supporter.avg_tokens, b.supporter.avg_tokens, 2);
    return out;
}

}  // namespace detail

struct ReportInputs {
    std::filesystem::path corpus_a;
    std::filesystem::path corpus_b;
    std::string name_a = "corpus_a";
    std::string name_b = "corpus_b";
    bool drop_leading_a = false;
    bool drop_leading_b = false;
};

inline json cmd_report(const PipelineConfig& cfg, const ReportInputs& inputs) {
    auto full_a = load_jsonl_checked<Dialogue>(inputs.corpus_a, "corpus A");
    auto full_b = load_jsonl_checked<Dialogue>(inputs.corpus_b, "corpus B");
    const CorpusStats stats_a = corpus_stats(full_a, inputs.drop_leading_a);
    const CorpusStats stats_b = corpus_stats(full_b, inputs.drop_leading_b);

    auto a = sample_dialogues(std::move(full_a), cfg.analytics.sample,
                              cfg.generation.seed ^ fnv1a64("salience-a"));
    auto b = sample_dialogues(std::move(full_b), cfg.analytics.sample,
                              cfg.generation.seed ^ fnv1a64("salience-b"));
    const SalienceComparison comp = compare_salience(a, b, salience_options(cfg));

    const TfidfMatrix matrix_a = tfidf_matrix(a, cfg.analytics.lowercase);
    const TfidfMatrix matrix_b = tfidf_matrix(b, cfg.analytics.lowercase);
    const Histogram hist_a = pairwise_similarity_histogram(matrix_a, cfg.analytics.histogram_bins);
    const Histogram hist_b = pairwise_similarity_histogram(matrix_b, cfg.analytics.histogram_bins);

    std::vector<Dialogue> combined;
    combined.reserve(a.size() + b.size());
    combined.insert(combined.end(), a.begin(), a.end());
    combined.insert(combined.end(), b.begin(), b.end());
    const TfidfMatrix matrix_ab = tfidf_matrix(combined, cfg.analytics.lowercase);
    const Pca2d pca = pca_2d(matrix_ab);
    std::vector<ScatterPoint> points;
    points.reserve(combined.size());
    for (std::size_t i = 0; i < combined.size(); ++i)
        points.push_back({combined[i].id, i < a.size() ? inputs.name_a : inputs.name_b,
                          pca.scores[i][0], pca.scores[i][1]});

    std::string text;
    text += detail::stats_table(stats_a, stats_b, inputs.name_a, inputs.name_b);
    text += "\n" + inputs.name_a + " salient terms (z):\n";
    for (const auto& e : comp.top_a) text += "  " + salience_label(e) + "\n";
    text += "\n" + inputs.name_b + " salient terms (z):\n";
    for (const auto& e : comp.top_b) text += "  " + salience_label(e) + "\n";

    const auto reports = cfg.paths.reports();
    std::filesystem::create_directories(reports);
    write_text_file_atomic(reports / "report.txt", text);
    write_text_file_atomic(reports / ("similarity_histogram_" + inputs.name_a + ".csv"),
                           histogram_csv(hist_a));
    write_text_file_atomic(reports / ("similarity_histogram_" + inputs.name_b + ".csv"),
                           histogram_csv(hist_b));
    write_text_file_atomic(reports / "pca_combined.csv", scatter_csv(points, true));
    if (cfg.analytics.svg) {
        write_text_file_atomic(reports / ("similarity_histogram_" + inputs.name_a + ".svg"),
                               histogram_svg(hist_a, inputs.name_a + " pairwise similarity"));
        write_text_file_atomic(reports / ("similarity_histogram_" + inputs.name_b + ".svg"),
                               histogram_svg(hist_b, inputs.name_b + " pairwise similarity"));
        write_text_file_atomic(reports / "pca_combined.svg",
                               scatter_svg(points, "PCA of TF-IDF vectors"));
    }

    json report{{"name_a", inputs.name_a},
                {"name_b", inputs.name_b},
                {"stats_a", stats_a},
                {"stats_b", stats_b},
                {"sampled_a", a.size()},
                {"sampled_b", b.size()},
                {"top_a", comp.top_a},
                {"top_b", comp.top_b},
                {"explained_variance", pca.explained_variance},
                {"text", (reports / "report.txt").string()}};
    write_json_file_atomic(reports / "report.json", report);
    return report;
}

// ---------------------------------------------------------------------------
// Pipeline driver

inline json run_stage(const PipelineConfig& cfg, const std::string& stage) {
    if (stage == "ingest") return stage_ingest(cfg);
    if (stage == "generate") return stage_generate(cfg);
    if (stage == "simchat") return stage_simchat(cfg);
    if (stage == "filter") return stage_filter(cfg);
    if (stage == "stats") return stage_stats(cfg);
    if (stage == "diversity") return stage_diversity(cfg);
    if (stage == "distinct") return stage_distinct(cfg);
    if (stage == "toxicity") return stage_toxicity(cfg);
    if (stage == "export-finetune") return stage_export_finetune(cfg);
    throw std::invalid_argument("unknown stage: " + stage);
}

/// Runs cfg.stages in order. Archives the effective config first; stops at
/// the first failing stage, leaving earlier outputs in place.
inline json cmd_pipeline(const PipelineConfig& cfg) {
    cfg.ensure_valid();
    archive_config(cfg);
    json summary = json::array();
    for (const auto& stage : cfg.stages) {
        json report = run_stage(cfg, stage);
        summary.push_back(json{{"stage", stage}, {"report", report}});
    }
    std::filesystem::create_directories(cfg.paths.reports());
    write_json_file_atomic(cfg.paths.reports() / "pipeline_summary.json", summary);
    return summary;
}

}  // namespace chataug

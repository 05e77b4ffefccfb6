// Acceptance gate: one timed PASS/FAIL line per criterion, nonzero exit on
// any failure. The full-data criterion is skipped unless the corpus paths
// are supplied through the environment (see README).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <Eigen/Dense>

#include "chataug/analytics.hpp"
#include "chataug/filters.hpp"
#include "chataug/genloop.hpp"
#include "chataug/mock_backend.hpp"
#include "chataug/pipeline.hpp"
#include "chataug/prompt.hpp"

#include "support/helpers.hpp"

using namespace chataug;
using Clock = std::chrono::steady_clock;

namespace {

#ifndef CHATAUG_TEST_DATA_DIR
#define CHATAUG_TEST_DATA_DIR "tests/data"
#endif
#ifndef CHATAUG_CLI_PATH
#define CHATAUG_CLI_PATH ""
#endif

int g_failures = 0;

struct Outcome {
    bool ok = true;
    std::string detail;

    void require(bool cond, const std::string& what) {
        if (!cond && ok) {
            ok = false;
            detail = what;
        }
    }
};

template <typename Body>
void criterion(int number, const std::string& name, Body&& body) {
    const auto start = Clock::now();
    Outcome out;
    try {
        body(out);
    } catch (const std::exception& e) {
        out.require(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    if (out.ok) {
        std::printf("[PASS] %d. %s (%.2fs)\n", number, name.c_str(), secs);
    } else {
        std::printf("[FAIL] %d. %s (%.2fs): %s\n", number, name.c_str(), secs,
                    out.detail.c_str());
        ++g_failures;
    }
    std::fflush(stdout);
}

bool close_abs(double a, double b, double tol) { return std::abs(a - b) <= tol; }

// --- criterion 1 -----------------------------------------------------------

void check_fixture(Outcome& out) {
    const std::filesystem::path data = CHATAUG_TEST_DATA_DIR;
    auto seeds = load_jsonl<SeedPost>(data / "fixture_seeds.jsonl");
    auto completions = load_jsonl<RawCompletion>(data / "fixture_completions.jsonl");
    const json manifest = json::parse(read_text_file(data / "fixture_manifest.json"));
    out.require(completions.size() == manifest.at("total").get<std::size_t>(),
                "fixture size does not match its manifest");

    const auto start = Clock::now();
    auto result = postprocess_corpus(completions, seeds, default_prompt_template(),
                                     FilterThresholds{});
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    out.require(secs < 1.0, "postprocessing the fixture took " + std::to_string(secs) + "s");

    const auto& expected = manifest.at("expected_removed_by_rule");
    std::size_t removed_total = 0;
    for (std::size_t r = 0; r < kFilterRuleCount; ++r) {
        const std::string rule(kFilterRuleNames[r]);
        const std::size_t want = expected.value(rule, std::size_t{0});
        const std::size_t got = result.report.removed_by_rule[r];
        out.require(got == want, rule + ": removed " + std::to_string(got) + ", planted " +
                                     std::to_string(want));
        removed_total += got;
    }
    out.require(result.report.retained == manifest.at("expected_retained").get<std::size_t>(),
                "retained count diverges from the manifest");
    out.require(result.report.retained + removed_total == result.report.total,
                "retained + removed != total");
    out.require(result.report.input_errors == 0, "fixture produced input errors");
}

// --- criterion 2 -----------------------------------------------------------

void check_round_trip(Outcome& out) {
    const PromptTemplate tpl = default_prompt_template();
    SplitMix64 rng{0xAC2};
    std::size_t failures = 0;
    for (std::size_t rep = 0; rep < 1000 && out.ok; ++rep) {
        const std::string id = "rt" + std::to_string(rep);
        Dialogue d = testutil::random_valid_dialogue(rng, id);
        const std::string rendered = render_dialogue(d, tpl, false);
        const std::string prefix =
            tpl.seeker_prefix + d.utterances[0].text + tpl.turn_separator + "AI:";
        if (!rendered.starts_with(prefix)) {
            ++failures;
            continue;
        }
        SeedPost post = make_seed_post(id, d.utterances[0].text, "sad");
        RawCompletion completion;
        completion.seed_post_id = id;
        completion.epoch = 1;
        completion.prompt_text = build_completion_prompt(post, tpl);
        completion.generated_text = rendered.substr(prefix.size());
        completion.finish_reason = FinishReason::Eos;
        ParseOutcome parsed = parse_completion(post, completion, tpl);
        if (!parsed.ok()) {
            ++failures;
            continue;
        }
        const Dialogue& back = parsed.dialogue();
        bool same = back.utterances.size() == d.utterances.size();
        for (std::size_t i = 0; same && i < d.utterances.size(); ++i)
            same = back.utterances[i].speaker == d.utterances[i].speaker &&
                   back.utterances[i].text == d.utterances[i].text;
        if (!same) ++failures;
    }
    out.require(failures == 0,
                std::to_string(failures) + " of 1000 round trips changed the dialogue");
}

// --- criterion 3 -----------------------------------------------------------

void check_salience(Outcome& out) {
    SplitMix64 rng{0x5A7};
    for (std::size_t rep = 0; rep < 100 && out.ok; ++rep) {
        const std::size_t vocab = 2 + rng.below(49);  // <= 50 terms
        std::vector<std::string> terms;
        for (std::size_t t = 0; t < vocab; ++t) terms.push_back("t" + std::to_string(t));

        // independent bookkeeping while the corpora are generated
        TermCounts mine_a, mine_b;
        auto make_corpus = [&](TermCounts& mine) {
            std::vector<Dialogue> corpus;
            const std::size_t docs = 1 + rng.below(20);
            for (std::size_t i = 0; i < docs; ++i) {
                Dialogue d;
                d.id = "s" + std::to_string(corpus.size());
                d.seed_post_id = d.id;
                d.source = DialogueSource::Completion;
                std::string text;
                for (const auto& term : terms) {
                    const std::size_t reps = rng.below(20);
                    for (std::size_t k = 0; k < reps; ++k) {
                        if (!text.empty()) text += ' ';
                        text += term;
                        ++mine[term];
                    }
                }
                if (text.empty()) {
                    text = terms[0];
                    ++mine[terms[0]];
                }
                d.utterances.push_back({Speaker::Seeker, text});
                corpus.push_back(std::move(d));
            }
            return corpus;
        };
        auto corpus_a = make_corpus(mine_a);
        auto corpus_b = make_corpus(mine_b);

        TermCounts counts_a = term_counts(corpus_a);
        TermCounts counts_b = term_counts(corpus_b);
        TermCounts combined = counts_a;
        for (const auto& [t, c] : counts_b) combined[t] += c;
        const double alpha0 = 1000.0;
        const DirichletPrior prior = make_informative_prior(combined, alpha0);
        auto entries = log_odds_salience(counts_a, counts_b, prior);
        auto reversed = log_odds_salience(counts_b, counts_a, prior);
        std::map<std::string, double> reversed_z;
        for (const auto& e : reversed) reversed_z[e.term] = e.z;

        double n_mine_a = 0, n_mine_b = 0, total_combined = 0;
        for (const auto& [t, c] : mine_a) n_mine_a += static_cast<double>(c);
        for (const auto& [t, c] : mine_b) n_mine_b += static_cast<double>(c);
        for (const auto& [t, c] : combined) total_combined += static_cast<double>(c);

        for (const auto& e : entries) {
            const double y_a = static_cast<double>(mine_a.count(e.term) ? mine_a[e.term] : 0);
            const double y_b = static_cast<double>(mine_b.count(e.term) ? mine_b[e.term] : 0);
            const double alpha_w =
                alpha0 * static_cast<double>(combined.at(e.term)) / total_combined;
            auto oracle =
                testutil::salience_oracle(y_a, n_mine_a, y_b, n_mine_b, alpha_w, alpha0);
            out.require(close_abs(e.delta, oracle.delta, 1e-9), e.term + ": delta off oracle");
            out.require(close_abs(e.variance, oracle.variance, 1e-9),
                        e.term + ": variance off oracle");
            out.require(close_abs(e.z, oracle.z, 1e-9), e.term + ": z off oracle");
            out.require(close_abs(e.z + reversed_z.at(e.term), 0.0, 1e-12),
                        e.term + ": antisymmetry violated");
            if (!out.ok) return;
        }
    }

    // identical corpora: every z is exactly zero
    std::vector<Dialogue> same;
    SplitMix64 rng2{0xE0};
    for (std::size_t i = 0; i < 6; ++i)
        same.push_back(testutil::random_valid_dialogue(rng2, "same" + std::to_string(i)));
    TermCounts c = term_counts(same);
    auto zero = log_odds_salience(c, c, make_informative_prior(c));
    for (const auto& e : zero) {
        out.require(e.delta == 0.0 && e.z == 0.0, e.term + ": identical corpora gave nonzero z");
        if (!out.ok) return;
    }
}

// --- criterion 4 -----------------------------------------------------------

Pca2d eigen_pca_oracle(const std::vector<std::vector<double>>& rows) {
    const auto n = static_cast<Eigen::Index>(rows.size());
    const auto dim = static_cast<Eigen::Index>(rows.front().size());
    Eigen::MatrixXd x(n, dim);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < dim; ++j) x(i, j) = rows[i][j];
    Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
    Eigen::MatrixXd cov =
        centered.transpose() * centered / static_cast<double>(n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);

    Pca2d result;
    result.scores.assign(rows.size(), {0.0, 0.0});
    for (int comp = 0; comp < 2; ++comp) {
        const Eigen::Index col = dim - 1 - comp;  // eigenvalues ascend
        Eigen::VectorXd v = solver.eigenvectors().col(col);
        Eigen::Index arg;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0.0) v = -v;
        Eigen::VectorXd s = centered * v;
        for (Eigen::Index i = 0; i < n; ++i) result.scores[i][comp] = s(i);
        result.explained_variance[comp] = solver.eigenvalues()(col);
    }
    return result;
}

void check_vectorization(Outcome& out) {
    // frozen 3-document TF-IDF matrix, recomputed here from the formula
    const std::vector<std::vector<std::string>> docs = {{"a", "b"}, {"a", "c"}, {"c"}};
    TfidfMatrix m = tfidf_matrix(docs);
    out.require(m.vocab == std::vector<std::string>{"a", "b", "c"}, "tfidf vocab order");
    const double wa = std::log(4.0 / 3.0) + 1.0;  // df(a) = 2 of 3 docs
    const double wb = std::log(4.0 / 2.0) + 1.0;
    const double norm0 = std::sqrt(wa * wa + wb * wb);
    const double expected[3][3] = {{wa / norm0, wb / norm0, 0.0},
                                   {1.0 / std::sqrt(2.0), 0.0, 1.0 / std::sqrt(2.0)},
                                   {0.0, 0.0, 1.0}};
    for (std::size_t i = 0; i < 3; ++i) {
        std::vector<double> dense(3, 0.0);
        for (const auto& [t, v] : m.rows[i]) dense[t] = v;
        for (std::size_t j = 0; j < 3; ++j)
            out.require(close_abs(dense[j], expected[i][j], 1e-9), "tfidf matrix entry off");
    }

    // PCA against a dense eigensolver
    SplitMix64 rng{0x9CA};
    for (std::size_t rep = 0; rep < 25 && out.ok; ++rep) {
        std::vector<std::vector<double>> rows(10, std::vector<double>(6));
        for (auto& row : rows)
            for (auto& v : row) v = rng.unit() * 4.0 - 2.0;
        Pca2d got = pca_2d(rows);
        Pca2d want = eigen_pca_oracle(rows);
        for (int c = 0; c < 2; ++c) {
            out.require(close_abs(got.explained_variance[c], want.explained_variance[c], 1e-6),
                        "explained variance off the dense oracle");
            for (std::size_t i = 0; i < rows.size(); ++i)
                out.require(close_abs(got.scores[i][c], want.scores[i][c], 1e-6),
                            "pca score off the dense oracle");
        }
    }

    // histogram sample count is n(n-1)/2
    for (std::size_t n : {std::size_t{2}, std::size_t{10}, std::size_t{100}}) {
        std::vector<std::vector<std::string>> texts;
        SplitMix64 hr{n};
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<std::string> doc;
            for (std::size_t w = 0; w < 5; ++w)
                doc.push_back(testutil::word_pool()[hr.below(testutil::word_pool().size())]);
            texts.push_back(std::move(doc));
        }
        Histogram h = pairwise_similarity_histogram(tfidf_matrix(texts), 50);
        out.require(h.samples == n * (n - 1) / 2, "histogram sample count for n=" +
                                                      std::to_string(n));
        std::size_t sum = 0;
        for (auto cnt : h.counts) sum += cnt;
        out.require(sum == h.samples, "histogram counts do not sum to samples");
    }
}

// --- criterion 5 -----------------------------------------------------------

Dialogue pattern_dialogue(const std::string& pattern, std::size_t seeker_tokens,
                          std::size_t supporter_tokens) {
    SplitMix64 rng{0xB0DA};
    Dialogue d;
    d.id = "boundary";
    d.seed_post_id = "boundary";
    d.source = DialogueSource::Completion;
    for (char c : pattern) {
        const Speaker s = c == 'S' ? Speaker::Seeker : Speaker::Supporter;
        d.utterances.push_back(
            {s, testutil::utterance_with_tokens(rng, s == Speaker::Seeker ? seeker_tokens
                                                                          : supporter_tokens)});
    }
    return d;
}

void check_boundaries(Outcome& out) {
    const FilterThresholds t{};
    auto expect = [&](const Dialogue& d, bool retained, FilterRule rule,
                      const std::string& what) {
        FilterVerdict v = classify_dialogue(d, t);
        out.require(v.retained == retained, what + ": wrong verdict");
        if (!retained && v.retained == retained)
            out.require(v.rule == rule, what + ": wrong rule attributed");
    };

    // balance boundary: 10 vs 4 sits exactly at ratio 2.5
    expect(pattern_dialogue("SSPSSPSSPSSPSS", 10, 12), true, FilterRule::NonDialogue,
           "10v4 balance");
    expect(pattern_dialogue("SSSPSSSPSSSPSSP", 10, 12), false, FilterRule::UnbalancedUtterances,
           "11v4 balance");
    // consecutive boundary: a run of 3 is fine, 4 is not
    expect(pattern_dialogue("SPSPPPSPSPSP", 10, 12), true, FilterRule::NonDialogue, "run of 3");
    expect(pattern_dialogue("SPSPPPPSPSPS", 10, 12), false, FilterRule::ConsecutiveUtterances,
           "run of 4");
    // total boundary: 10 utterances fail, 11 pass
    expect(pattern_dialogue("SPSPSPSPSP", 10, 12), false, FilterRule::TotalUtterances,
           "10 utterances");
    expect(pattern_dialogue("SPSPSPSPSPS", 10, 12), true, FilterRule::NonDialogue,
           "11 utterances");
    // single-utterance length boundary: 80 tokens pass, 81 fail
    SplitMix64 rng{0xFEED};
    auto with_long = [&](std::size_t tokens) {
        Dialogue d = pattern_dialogue("SPSPSPSPSPSP", 10, 12);
        d.utterances[2].text = testutil::utterance_with_tokens(rng, tokens);
        return d;
    };
    expect(with_long(80), true, FilterRule::NonDialogue, "80-token utterance");
    expect(with_long(81), false, FilterRule::UtteranceLength, "81-token utterance");
}

// --- criterion 6 -----------------------------------------------------------

PipelineConfig thousand_config(const std::filesystem::path& out_dir) {
    PipelineConfig cfg;
    cfg.paths.seeds = (std::filesystem::path(CHATAUG_TEST_DATA_DIR) / "seeds_1000.csv").string();
    cfg.paths.out_dir = out_dir.string();
    cfg.generation.epochs = 1;
    cfg.generation.seed = 606;
    cfg.analytics.svg = false;
    cfg.stages = {"ingest", "generate", "filter", "stats"};
    return cfg;
}

void check_thousand(Outcome& out) {
    testutil::ScratchDir dir("acc-thousand");
    const auto start = Clock::now();
    cmd_pipeline(thousand_config(dir / "a"));
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    out.require(secs < 10.0, "single sweep took " + std::to_string(secs) + "s");
    cmd_pipeline(thousand_config(dir / "b"));
    for (const char* name : {"raw_completions.jsonl", "corpus.jsonl", "seeds_screened.jsonl"}) {
        out.require(read_text_file(dir / "a" / name) == read_text_file(dir / "b" / name),
                    std::string(name) + " differs between identical runs");
    }
    auto store = load_jsonl<RawCompletion>(dir / "a" / "raw_completions.jsonl");
    out.require(store.size() == 1000, "expected 1000 completions");
}

// --- criterion 7 -----------------------------------------------------------

pid_t spawn_generate(const std::string& cfg_path) {
    const pid_t pid = fork();
    if (pid == 0) {
        if (!freopen("/dev/null", "w", stdout) || !freopen("/dev/null", "w", stderr)) _exit(97);
        execl(CHATAUG_CLI_PATH, "chataug", "generate", "--config", cfg_path.c_str(),
              static_cast<char*>(nullptr));
        _exit(98);
    }
    return pid;
}

void check_crash_resume(Outcome& out) {
    out.require(std::string(CHATAUG_CLI_PATH) != "", "CLI path not configured");
    if (!out.ok) return;
    testutil::ScratchDir dir("acc-crash");

    auto write_cfg = [&](const PipelineConfig& cfg, const std::string& name) {
        const std::string path = (dir / name).string();
        std::ofstream f(path);
        f << json(cfg).dump() << '\n';
        return path;
    };

    PipelineConfig clean = thousand_config(dir / "clean");
    clean.generation.epochs = 2;
    clean.stages = {"ingest", "generate"};
    stage_ingest(clean);
    PipelineConfig cfg = thousand_config(dir / "kill");
    cfg.generation.epochs = 2;
    cfg.stages = {"ingest", "generate"};
    stage_ingest(cfg);
    const std::string cfg_path = write_cfg(cfg, "cfg.json");

    // uninterrupted reference run through the same process path; its wall
    // time bounds the window the kills are spread across
    const auto clean_start = Clock::now();
    {
        const pid_t pid = spawn_generate(write_cfg(clean, "clean.json"));
        out.require(pid >= 0, "fork failed");
        if (!out.ok) return;
        int status = 0;
        waitpid(pid, &status, 0);
        out.require(WIFEXITED(status) && WEXITSTATUS(status) == 0, "clean generate run failed");
        if (!out.ok) return;
    }
    const double window_us =
        std::chrono::duration<double, std::micro>(Clock::now() - clean_start).count();

    SplitMix64 rng{0xD1E};
    std::size_t partial_rounds = 0;
    for (int round = 0; round < 10; ++round) {
        const pid_t pid = spawn_generate(cfg_path);
        out.require(pid >= 0, "fork failed");
        if (!out.ok) return;
        // kill at a random point inside this round's slice of the window
        const double lo = window_us * round / 10.0;
        const double hi = window_us * (round + 1) / 10.0;
        usleep(static_cast<useconds_t>(lo + rng.unit() * (hi - lo)));
        kill(pid, SIGKILL);
        int status = 0;
        waitpid(pid, &status, 0);

        // after every crash the store must still hold unique, in-run pairs
        std::error_code ec;
        if (!std::filesystem::exists(dir / "kill" / "raw_completions.jsonl", ec)) continue;
        auto store = load_jsonl<RawCompletion>(dir / "kill" / "raw_completions.jsonl");
        std::set<std::pair<std::string, std::size_t>> pairs;
        for (const auto& c : store) pairs.emplace(c.seed_post_id, c.epoch);
        out.require(pairs.size() == store.size(), "duplicate pair after crash");
        if (!out.ok) return;
        if (!store.empty() && store.size() < 2000) ++partial_rounds;
    }
    out.require(partial_rounds > 0, "no kill landed mid-sweep; the schedule needs retuning");

    stage_generate(cfg);  // final uninterrupted resume
    auto store = load_jsonl<RawCompletion>(dir / "kill" / "raw_completions.jsonl");
    std::set<std::pair<std::string, std::size_t>> pairs;
    for (const auto& c : store) pairs.emplace(c.seed_post_id, c.epoch);
    out.require(store.size() == 2000, "resume ended with " + std::to_string(store.size()) +
                                          " completions instead of 2000");
    out.require(pairs.size() == store.size(), "duplicate pair after resume");
    out.require(read_text_file(dir / "kill" / "raw_completions.jsonl") ==
                    read_text_file(dir / "clean" / "raw_completions.jsonl"),
                "resumed store is not byte-identical to the uninterrupted run");
}

// --- criterion 8 -----------------------------------------------------------

void check_full_data(Outcome& out, const char* augesc_path, const char* esconv_path) {
    auto augesc = load_jsonl<Dialogue>(augesc_path);
    CorpusStats stats = corpus_stats(augesc, false);
    out.require(close_abs(stats.avg_utterances_per_session, 26.7, 26.7 * 0.005),
                "average utterances per session = " +
                    std::to_string(stats.avg_utterances_per_session));
    out.require(close_abs(stats.avg_utterance_tokens, 18.7, 18.7 * 0.005),
                "average utterance length = " + std::to_string(stats.avg_utterance_tokens));

    auto esconv = load_jsonl<Dialogue>(esconv_path);
    auto sample = sample_dialogues(augesc, 1300, 606);
    SalienceOptions opts;
    opts.stop_words = {};
    auto comparison = compare_salience(esconv, sample, opts);
    const std::set<std::string> reference = {"pandemic", "covid",   "depression", "support",
                                             "christmas", "job",    "anxiety",    "online",
                                             "vaccine",   "zoom"};
    std::size_t hits = 0;
    for (std::size_t i = 0; i < comparison.top_a.size() && i < 10; ++i)
        if (reference.contains(comparison.top_a[i].term)) ++hits;
    out.require(hits >= 6, "only " + std::to_string(hits) +
                               " of the reference top-10 terms were recovered");
}

}  // namespace

int main() {
    criterion(1, "shipped fixture reproduces its planted filter counts", check_fixture);
    criterion(2, "1000 render/parse round trips preserve structure", check_round_trip);
    criterion(3, "log-odds salience matches the direct formula", check_salience);
    criterion(4, "tf-idf, pca, and similarity histogram match their oracles",
              check_vectorization);
    criterion(5, "filter thresholds sit exactly on their boundaries", check_boundaries);
    criterion(6, "1000-seed sweep is fast and reproducible", check_thousand);
    criterion(7, "ten crashes resume to an exact, duplicate-free store", check_crash_resume);

    const char* augesc = std::getenv("CHATAUG_AUGESC_PATH");
    const char* esconv = std::getenv("CHATAUG_ESCONV_PATH");
    if (augesc && esconv) {
        criterion(8, "full-data statistics and salience match the reference",
                  [&](Outcome& out) { check_full_data(out, augesc, esconv); });
    } else {
        std::printf(
            "[SKIP] 8. full-data statistics (set CHATAUG_AUGESC_PATH and "
            "CHATAUG_ESCONV_PATH to enable)\n");
    }

    if (g_failures > 0) {
        std::printf("%d criterion(s) failed\n", g_failures);
        return 1;
    }
    std::printf("all criteria passed\n");
    return 0;
}

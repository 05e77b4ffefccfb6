#pragma once

// Generation orchestration: epoch sweeps over seed posts with an exactly-once
// manifest, the direct-prompt variant, and the two-backend simulated chat
// baseline.
//
// Crash model: every completion is appended to the raw store and flushed
// before its journal mark is written. On resume the store is the source of
// truth; a torn trailing line (interrupted write) is truncated away and its
// pair regenerated, and journal marks are healed from the store. Pending
// pairs are processed in canonical order (epoch-major, then input post
// order), and commits preserve that order even under parallelism, so the
// finished store is byte-identical no matter how often the run was
// interrupted.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "chataug/core.hpp"
#include "chataug/io.hpp"
#include "chataug/prompt.hpp"

namespace chataug {

struct BackendDescriptor {
    std::string endpoint;        // "mock" or an http(s) URL
    std::string auth_token_env;  // env var holding the bearer token, may be empty
    std::string model_label;
    std::size_t request_timeout_ms = 30000;
    std::size_t max_retries = 3;
};

inline void to_json(json& j, const BackendDescriptor& b) {
    j = json{{"endpoint", b.endpoint},
             {"auth_token_env", b.auth_token_env},
             {"model_label", b.model_label},
             {"request_timeout_ms", b.request_timeout_ms},
             {"max_retries", b.max_retries}};
}

inline void from_json(const json& j, BackendDescriptor& b) {
    b.endpoint = j.value("endpoint", b.endpoint);
    b.auth_token_env = j.value("auth_token_env", b.auth_token_env);
    b.model_label = j.value("model_label", b.model_label);
    b.request_timeout_ms = j.value("request_timeout_ms", b.request_timeout_ms);
    b.max_retries = j.value("max_retries", b.max_retries);
}

struct CompletionRequest {
    std::string seed_post_id;
    std::size_t epoch = 1;  // 1-based
    std::string prompt;
    GenerationParams params;
};

struct CompletionResult {
    std::string text;
    FinishReason finish_reason = FinishReason::Eos;
};

/// A backend never throws out of complete(): permanent failures come back as
/// finish_reason = BackendError.
class CompletionBackend {
public:
    virtual ~CompletionBackend() = default;
    virtual std::string label() const = 0;
    virtual CompletionResult complete(const CompletionRequest& request) = 0;
};

// ---------------------------------------------------------------------------
// Manifest journal

using SeedEpoch = std::pair<std::string, std::size_t>;

/// Owns the append-only journal and the raw-completion store for one run.
/// Construction reconciles the two files and validates the run config.
class ManifestJournal {
public:
    ManifestJournal(std::filesystem::path journal_path, std::filesystem::path store_path,
                    std::string run_id, std::vector<std::string> seeds, std::size_t epochs,
                    const GenerationParams& params)
        : journal_path_(std::move(journal_path)),
          store_path_(std::move(store_path)),
          run_id_(std::move(run_id)),
          seeds_(std::move(seeds)),
          epochs_(epochs),
          params_(params) {
        if (seeds_.empty()) throw std::invalid_argument("manifest: empty seed list");
        if (epochs_ == 0) throw std::invalid_argument("manifest: epochs must be >= 1");
        std::set<std::string> seed_set(seeds_.begin(), seeds_.end());
        if (seed_set.size() != seeds_.size())
            throw std::invalid_argument("manifest: duplicate seed ids");
        validate_or_write_header();
        scan_store(seed_set);
        heal_journal();
        journal_out_.open(journal_path_, std::ios::app | std::ios::binary);
        store_out_.open(store_path_, std::ios::app | std::ios::binary);
        if (!journal_out_ || !store_out_)
            throw std::runtime_error("manifest: cannot open journal/store for append");
    }

    const std::set<SeedEpoch>& completed() const { return completed_; }
    bool is_complete(const std::string& seed, std::size_t epoch) const {
        return completed_.contains({seed, epoch});
    }
    std::size_t total_pairs() const { return seeds_.size() * epochs_; }
    bool finished() const { return completed_.size() == total_pairs(); }
    const std::vector<std::string>& seeds() const { return seeds_; }
    std::size_t epochs() const { return epochs_; }
    const GenerationParams& params() const { return params_; }

    /// Store line first (flushed), then the journal mark (flushed).
    void commit(const RawCompletion& completion) {
        json line = completion;
        store_out_ << line.dump() << '\n';
        store_out_.flush();
        json mark{{"type", "done"},
                  {"seed_post_id", completion.seed_post_id},
                  {"epoch", completion.epoch}};
        journal_out_ << mark.dump() << '\n';
        journal_out_.flush();
        completed_.insert({completion.seed_post_id, completion.epoch});
    }

private:
    // Reads intact JSONL lines; if the final line is torn (interrupted
    // append), truncates the file back to the last intact line. A corrupt
    // line anywhere else is a hard error.
    static std::vector<json> read_and_repair(const std::filesystem::path& path) {
        std::vector<json> lines;
        std::ifstream in(path, std::ios::binary);
        if (!in) return lines;
        std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        in.close();
        std::size_t pos = 0, intact_end = 0;
        while (pos < content.size()) {
            auto nl = content.find('\n', pos);
            const bool terminated = nl != std::string::npos;
            const std::string_view line(content.data() + pos,
                                        (terminated ? nl : content.size()) - pos);
            bool ok = terminated && !line.empty();
            if (ok) {
                try {
                    lines.push_back(json::parse(line));
                } catch (const json::parse_error&) {
                    ok = false;
                }
            }
            if (!ok) {
                if (terminated)
                    throw std::runtime_error("corrupt line in " + path.string());
                // torn trailing line: drop it
                std::filesystem::resize_file(path, intact_end);
                break;
            }
            pos = nl + 1;
            intact_end = pos;
        }
        return lines;
    }

    void validate_or_write_header() {
        const json expected{{"type", "run"},
                            {"run_id", run_id_},
                            {"seeds", seeds_},
                            {"epochs", epochs_},
                            {"gen_params", params_}};
        auto lines = read_and_repair(journal_path_);
        if (lines.empty()) {
            std::ofstream out(journal_path_, std::ios::app | std::ios::binary);
            out << expected.dump() << '\n';
            out.flush();
            return;
        }
        if (lines.front() != expected)
            throw std::runtime_error(
                "manifest: journal at " + journal_path_.string() +
                " belongs to a different run configuration; refusing to continue");
        for (std::size_t i = 1; i < lines.size(); ++i) {
            const auto& l = lines[i];
            if (l.value("type", "") != "done")
                throw std::runtime_error("manifest: unexpected journal record");
            journal_pairs_.insert(
                {l.at("seed_post_id").get<std::string>(), l.at("epoch").get<std::size_t>()});
        }
    }

    void scan_store(const std::set<std::string>& seed_set) {
        for (auto& l : read_and_repair(store_path_)) {
            RawCompletion c = l.get<RawCompletion>();
            if (!seed_set.contains(c.seed_post_id) || c.epoch < 1 || c.epoch > epochs_)
                throw std::runtime_error("manifest: store contains pair outside this run: " +
                                         c.seed_post_id + " epoch " + std::to_string(c.epoch));
            if (!completed_.insert({c.seed_post_id, c.epoch}).second)
                throw std::runtime_error("manifest: duplicate pair in store: " + c.seed_post_id +
                                         " epoch " + std::to_string(c.epoch));
        }
    }

    void heal_journal() {
        std::ofstream out;
        for (const auto& pair : completed_) {
            if (journal_pairs_.contains(pair)) continue;
            if (!out.is_open()) out.open(journal_path_, std::ios::app | std::ios::binary);
            json mark{{"type", "done"}, {"seed_post_id", pair.first}, {"epoch", pair.second}};
            out << mark.dump() << '\n';
        }
        if (out.is_open()) out.flush();
        // journal marks without a store line belonged to an interrupted
        // commit whose store write was lost; those pairs simply rerun.
    }

    std::filesystem::path journal_path_;
    std::filesystem::path store_path_;
    std::string run_id_;
    std::vector<std::string> seeds_;
    std::size_t epochs_;
    GenerationParams params_;
    std::set<SeedEpoch> completed_;
    std::set<SeedEpoch> journal_pairs_;
    std::ofstream journal_out_;
    std::ofstream store_out_;
};

// ---------------------------------------------------------------------------
// Augmentation sweep

struct AugmentationOptions {
    std::size_t parallelism = 4;
    std::function<void(const RawCompletion&)> sink;  // called after each commit
};

struct AugmentationSummary {
    std::size_t emitted = 0;          // new completions this invocation
    std::size_t backend_errors = 0;   // emitted completions with BackendError
    std::size_t already_complete = 0; // pairs skipped thanks to the manifest
};

/// Sweep every (post, epoch) pair not yet in the manifest. Epochs are
/// 1-based. Fresh-run emission count is |posts| * params.epochs regardless
/// of backend failures.
inline AugmentationSummary run_augmentation(const std::vector<SeedPost>& posts,
                                            const PromptTemplate& tpl,
                                            const GenerationParams& params,
                                            CompletionBackend& backend, ManifestJournal& manifest,
                                            const AugmentationOptions& opts = {}) {
    params.validate();
    tpl.validate();
    if (posts.size() != manifest.seeds().size())
        throw std::invalid_argument("run_augmentation: posts do not match manifest seeds");
    std::map<std::string_view, const SeedPost*> by_id;
    for (const auto& p : posts) by_id.emplace(p.id, &p);
    for (const auto& id : manifest.seeds())
        if (!by_id.contains(id))
            throw std::invalid_argument("run_augmentation: manifest seed missing from posts: " + id);

    struct Pending {
        const SeedPost* post;
        std::size_t epoch;
    };
    std::vector<Pending> pending;
    AugmentationSummary summary;
    for (std::size_t epoch = 1; epoch <= manifest.epochs(); ++epoch) {
        for (const auto& id : manifest.seeds()) {
            if (manifest.is_complete(id, epoch)) {
                ++summary.already_complete;
                continue;
            }
            pending.push_back({by_id.at(id), epoch});
        }
    }

    const std::size_t parallelism = std::max<std::size_t>(1, opts.parallelism);
    const std::size_t chunk = parallelism * 8;
    const std::string backend_label = backend.label();

    auto generate_one = [&](const Pending& item) {
        RawCompletion c;
        c.seed_post_id = item.post->id;
        c.epoch = item.epoch;
        c.prompt_text = build_completion_prompt(*item.post, tpl);
        c.gen_params = params;
        c.backend_label = backend_label;
        CompletionRequest req{c.seed_post_id, c.epoch, c.prompt_text, params};
        try {
            CompletionResult res = backend.complete(req);
            c.generated_text = std::move(res.text);
            c.finish_reason = res.finish_reason;
        } catch (...) {
            c.generated_text.clear();
            c.finish_reason = FinishReason::BackendError;
        }
        return c;
    };

    for (std::size_t base = 0; base < pending.size(); base += chunk) {
        const std::size_t count = std::min(chunk, pending.size() - base);
        std::vector<RawCompletion> results(count);
        if (parallelism == 1 || count == 1) {
            for (std::size_t i = 0; i < count; ++i) results[i] = generate_one(pending[base + i]);
        } else {
            std::vector<std::future<void>> workers;
            const std::size_t stride = (count + parallelism - 1) / parallelism;
            for (std::size_t w = 0; w < parallelism; ++w) {
                const std::size_t lo = w * stride;
                if (lo >= count) break;
                const std::size_t hi = std::min(lo + stride, count);
                workers.push_back(std::async(std::launch::async, [&, lo, hi] {
                    for (std::size_t i = lo; i < hi; ++i)
                        results[i] = generate_one(pending[base + i]);
                }));
            }
            for (auto& f : workers) f.get();
        }
        // canonical commit order = pending order
        for (auto& c : results) {
            manifest.commit(c);
            ++summary.emitted;
            if (c.finish_reason == FinishReason::BackendError) ++summary.backend_errors;
            if (opts.sink) opts.sink(c);
        }
    }
    return summary;
}

/// Direct-prompt baseline: one epoch, generation capped at 400 new tokens,
/// otherwise the same sweep and manifest contract.
inline AugmentationSummary run_direct_prompt(const std::vector<SeedPost>& posts,
                                             const PromptTemplate& tpl, GenerationParams params,
                                             CompletionBackend& backend, ManifestJournal& manifest,
                                             const AugmentationOptions& opts = {}) {
    params.max_new_tokens = 400;
    params.epochs = 1;
    return run_augmentation(posts, tpl, params, backend, manifest, opts);
}

// ---------------------------------------------------------------------------
// Simulated chat baseline

namespace detail {

inline bool contains_ci(std::string_view haystack, std::string_view needle) {
    if (needle.empty()) return false;
    auto lower = [](char c) {
        return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
    };
    if (haystack.size() < needle.size()) return false;
    for (std::size_t i = 0; i + needle.size() <= haystack.size(); ++i) {
        bool hit = true;
        for (std::size_t k = 0; k < needle.size(); ++k) {
            if (lower(haystack[i + k]) != lower(needle[k])) {
                hit = false;
                break;
            }
        }
        if (hit) return true;
    }
    return false;
}

/// First usable line of a self-chat reply: blank lines skipped, an echoed
/// role prefix stripped, surrounding whitespace trimmed.
inline std::string first_reply_line(std::string_view text, const PromptTemplate& tpl) {
    std::string_view rest = text;
    while (!rest.empty()) {
        auto nl = rest.find('\n');
        auto line = rest.substr(0, nl);
        rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
        if (auto c = strip_role(line, tpl.seeker_prefix))
            line = *c;
        else if (auto c = strip_role(line, tpl.supporter_prefix))
            line = *c;
        auto trimmed = trim(line);
        if (!trimmed.empty()) return std::string(trimmed);
    }
    return {};
}

}  // namespace detail

/// Two backends improvise a conversation opened by the seed post. The
/// supporter replies first and roles alternate strictly. The loop stops at
/// max_utterances, or as soon as the latest utterance contains stop_word
/// (case-insensitive; "Goodbye!" stops a "bye" rule), or when a backend
/// fails — in which case the dialogue is truncated at the last good
/// utterance and the failure is noted in meta.
inline Dialogue simulate_chat(const SeedPost& post, const PromptTemplate& tpl,
                              CompletionBackend& seeker_backend,
                              CompletionBackend& supporter_backend,
                              const GenerationParams& params, std::size_t max_utterances = 40,
                              const std::string& stop_word = "bye") {
    if (max_utterances < 2) throw std::invalid_argument("simulate_chat: max_utterances must be >= 2");
    Dialogue d;
    d.id = "simchat-" + post.id;
    d.seed_post_id = post.id;
    d.source = DialogueSource::SimulatedChat;
    d.gen_params = params;
    d.utterances.push_back({Speaker::Seeker, post.text});
    d.meta["stopped_by"] = "max_utterances";

    while (d.utterances.size() < max_utterances) {
        if (detail::contains_ci(d.utterances.back().text, stop_word)) {
            d.meta["stopped_by"] = "stop_word";
            break;
        }
        const Speaker next =
            d.utterances.back().speaker == Speaker::Seeker ? Speaker::Supporter : Speaker::Seeker;
        CompletionBackend& backend =
            next == Speaker::Supporter ? supporter_backend : seeker_backend;
        std::string prompt = render_dialogue(d, tpl, /*include_description=*/true);
        prompt += tpl.turn_separator;
        prompt += detail::rstrip(tpl.prefix_for(next));
        CompletionRequest req{post.id, d.utterances.size(), prompt, params};
        CompletionResult res;
        try {
            res = backend.complete(req);
        } catch (...) {
            res.finish_reason = FinishReason::BackendError;
        }
        std::string utterance =
            res.finish_reason == FinishReason::BackendError
                ? std::string{}
                : detail::first_reply_line(res.text, tpl);
        if (utterance.empty()) {
            d.meta["stopped_by"] = "backend_error";
            break;
        }
        d.utterances.push_back({next, std::move(utterance)});
    }
    if (d.utterances.size() >= max_utterances &&
        detail::contains_ci(d.utterances.back().text, stop_word))
        d.meta["stopped_by"] = "stop_word";
    return d;
}

}  // namespace chataug

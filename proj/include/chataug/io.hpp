#pragma once

// JSON bindings for the domain types plus small file helpers. Corpora,
// seed posts and raw completions are interchanged as JSON-Lines; reports
// as single JSON documents. Stage outputs are written atomically
// (temp file + rename) so a crash never leaves a half-written artifact.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "chataug/core.hpp"

namespace chataug {

using json = nlohmann::json;

// --- domain type bindings ---------------------------------------------------

inline void to_json(json& j, const Utterance& u) {
    j = json{{"speaker", speaker_name(u.speaker)}, {"text", u.text}};
}

inline void from_json(const json& j, Utterance& u) {
    auto sp = speaker_from_name(j.at("speaker").get<std::string>());
    if (!sp) throw std::invalid_argument("unknown speaker: " + j.at("speaker").get<std::string>());
    u.speaker = *sp;
    u.text = j.at("text").get<std::string>();
}

inline void to_json(json& j, const GenerationParams& p) {
    j = json{{"nucleus_p", p.nucleus_p},
             {"repetition_penalty", p.repetition_penalty},
             {"max_new_tokens", p.max_new_tokens},
             {"epochs", p.epochs},
             {"seed", p.seed}};
}

inline void from_json(const json& j, GenerationParams& p) {
    p.nucleus_p = j.value("nucleus_p", 0.9);
    p.repetition_penalty = j.value("repetition_penalty", 1.05);
    p.max_new_tokens = j.value("max_new_tokens", 1500);
    p.epochs = j.value("epochs", 10);
    p.seed = j.value("seed", std::uint64_t{0});
}

inline void to_json(json& j, const Dialogue& d) {
    j = json{{"id", d.id},
             {"source", source_name(d.source)},
             {"utterances", d.utterances}};
    if (!d.seed_post_id.empty()) j["seed_post_id"] = d.seed_post_id;
    if (d.gen_params) j["gen_params"] = *d.gen_params;
    if (!d.meta.empty()) j["meta"] = d.meta;
}

inline void from_json(const json& j, Dialogue& d) {
    d.id = j.at("id").get<std::string>();
    auto src = source_from_name(j.at("source").get<std::string>());
    if (!src) throw std::invalid_argument("unknown source: " + j.at("source").get<std::string>());
    d.source = *src;
    d.utterances = j.at("utterances").get<std::vector<Utterance>>();
    d.seed_post_id = j.value("seed_post_id", std::string{});
    if (j.contains("gen_params")) d.gen_params = j.at("gen_params").get<GenerationParams>();
    if (j.contains("meta")) d.meta = j.at("meta").get<std::map<std::string, std::string>>();
}

inline void to_json(json& j, const SeedPost& p) {
    j = json{{"id", p.id},
             {"text", p.text},
             {"emotion_label", p.emotion_label},
             {"token_length", p.token_length}};
}

inline void from_json(const json& j, SeedPost& p) {
    // token_length is never trusted from input.
    p = make_seed_post(j.at("id").get<std::string>(), j.at("text").get<std::string>(),
                       j.at("emotion_label").get<std::string>());
}

// --- file helpers ------------------------------------------------------------

/// Read a JSON-Lines file, invoking `fn(line_number, parsed)` per non-empty line.
inline void read_jsonl(const std::filesystem::path& path,
                       const std::function<void(std::size_t, const json&)>& fn) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        fn(lineno, json::parse(line));
    }
}

template <typename T>
std::vector<T> load_jsonl(const std::filesystem::path& path) {
    std::vector<T> out;
    read_jsonl(path, [&](std::size_t, const json& j) { out.push_back(j.get<T>()); });
    return out;
}

/// Writes to `<path>.tmp` and renames into place on commit. Destroying an
/// uncommitted writer leaves the target untouched.
class AtomicFileWriter {
public:
    explicit AtomicFileWriter(std::filesystem::path path)
        : target_(std::move(path)), tmp_(target_.string() + ".tmp"), out_(tmp_, std::ios::trunc) {
        if (!out_) throw std::runtime_error("cannot open " + tmp_.string());
    }

    AtomicFileWriter(const AtomicFileWriter&) = delete;
    AtomicFileWriter& operator=(const AtomicFileWriter&) = delete;

    ~AtomicFileWriter() {
        if (!committed_) {
            out_.close();
            std::error_code ec;
            std::filesystem::remove(tmp_, ec);
        }
    }

    std::ostream& stream() { return out_; }

    void write_line(std::string_view line) {
        out_ << line << '\n';
    }

    void commit() {
        out_.flush();
        if (!out_) throw std::runtime_error("write failed for " + tmp_.string());
        out_.close();
        std::filesystem::rename(tmp_, target_);
        committed_ = true;
    }

private:
    std::filesystem::path target_;
    std::filesystem::path tmp_;
    std::ofstream out_;
    bool committed_ = false;
};

inline void write_text_file_atomic(const std::filesystem::path& path, std::string_view content) {
    AtomicFileWriter w(path);
    w.stream() << content;
    w.commit();
}

inline void write_json_file_atomic(const std::filesystem::path& path, const json& j) {
    AtomicFileWriter w(path);
    w.stream() << j.dump(2) << '\n';
    w.commit();
}

template <typename T>
void write_jsonl_atomic(const std::filesystem::path& path, const std::vector<T>& items) {
    AtomicFileWriter w(path);
    for (const auto& item : items) w.write_line(json(item).dump());
    w.commit();
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace chataug

#pragma once

// Seed post ingestion: read an EmpatheticDialogues-style table (CSV or
// JSON-Lines), keep the posts with negative emotion labels and a token
// length inside the configured bounds, and account for every rejection.

#include <array>
#include <istream>
#include <optional>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "chataug/core.hpp"
#include "chataug/io.hpp"

namespace chataug {

/// Conventional negative subset of the source dataset's 32 emotion labels.
inline const std::set<std::string>& default_negative_labels() {
    static const std::set<std::string> labels = {
        "afraid",     "angry",        "annoyed",   "anxious", "apprehensive", "ashamed",
        "devastated", "disappointed", "disgusted", "embarrassed", "furious", "guilty",
        "jealous",    "lonely",       "sad",       "terrified"};
    return labels;
}

struct SeedScreeningConfig {
    std::set<std::string> negative_labels = default_negative_labels();
    std::size_t min_len = 10;  // inclusive
    std::size_t max_len = 60;  // inclusive

    void validate() const {
        if (min_len == 0) throw std::invalid_argument("ingest.min_len must be >= 1");
        if (min_len > max_len) throw std::invalid_argument("ingest.min_len must be <= ingest.max_len");
        if (negative_labels.empty())
            throw std::invalid_argument("ingest.negative_labels must not be empty");
    }
};

/// Source column/field names; defaults match the canonical layout.
struct SeedRecordFields {
    std::string id = "id";
    std::string text = "text";
    std::string emotion_label = "emotion_label";
};

enum class RejectCause { Malformed, DuplicateId, WrongLabel, TooShort, TooLong };

inline constexpr std::array<std::string_view, 5> kRejectCauseNames = {
    "malformed", "duplicate_id", "wrong_label", "too_short", "too_long"};

struct ScreeningReport {
    std::size_t total = 0;
    std::size_t retained = 0;
    std::array<std::size_t, 5> rejected{};
    std::vector<std::string> errors;  // one message per malformed/duplicate record

    std::size_t rejected_total() const {
        std::size_t sum = 0;
        for (auto c : rejected) sum += c;
        return sum;
    }

    void count(RejectCause cause) { ++rejected[static_cast<std::size_t>(cause)]; }
};

inline void to_json(json& j, const ScreeningReport& r) {
    json rej;
    for (std::size_t i = 0; i < r.rejected.size(); ++i)
        rej[std::string(kRejectCauseNames[i])] = r.rejected[i];
    j = json{{"total", r.total}, {"retained", r.retained}, {"rejected", rej}, {"errors", r.errors}};
}

/// One raw input row before screening; `error` is set when fields were missing.
struct RawSeedRecord {
    std::optional<std::string> id;
    std::optional<std::string> text;
    std::optional<std::string> label;
    std::string error;
};

namespace detail {

// RFC 4180 CSV reader: quoted fields, doubled-quote escapes, embedded
// separators and newlines inside quotes.
class CsvReader {
public:
    explicit CsvReader(std::istream& in) : in_(in) {}

    std::optional<std::vector<std::string>> next_row() {
        if (!in_.good() || in_.peek() == EOF) return std::nullopt;
        std::vector<std::string> fields;
        std::string field;
        bool quoted = false;
        int c;
        while ((c = in_.get()) != EOF) {
            char ch = static_cast<char>(c);
            if (quoted) {
                if (ch == '"') {
                    if (in_.peek() == '"') {
                        field.push_back('"');
                        in_.get();
                    } else {
                        quoted = false;
                    }
                } else {
                    field.push_back(ch);
                }
            } else if (ch == '"' && field.empty()) {
                quoted = true;
            } else if (ch == ',') {
                fields.push_back(std::move(field));
                field.clear();
            } else if (ch == '\n') {
                break;
            } else if (ch == '\r') {
                if (in_.peek() == '\n') in_.get();
                break;
            } else {
                field.push_back(ch);
            }
        }
        fields.push_back(std::move(field));
        return fields;
    }

private:
    std::istream& in_;
};

}  // namespace detail

enum class SeedInputFormat { Csv, Jsonl };

/// Parse raw rows without screening; malformed rows carry an error message.
inline std::vector<RawSeedRecord> read_seed_records(std::istream& in, SeedInputFormat format,
                                                    const SeedRecordFields& fields) {
    std::vector<RawSeedRecord> records;
    if (format == SeedInputFormat::Csv) {
        detail::CsvReader reader(in);
        auto header = reader.next_row();
        if (!header) return records;
        auto col = [&](const std::string& name) -> std::optional<std::size_t> {
            for (std::size_t i = 0; i < header->size(); ++i)
                if ((*header)[i] == name) return i;
            return std::nullopt;
        };
        const auto id_col = col(fields.id);
        const auto text_col = col(fields.text);
        const auto label_col = col(fields.emotion_label);
        std::size_t lineno = 1;
        while (auto row = reader.next_row()) {
            ++lineno;
            if (row->size() == 1 && (*row)[0].empty()) continue;  // blank line
            RawSeedRecord rec;
            auto take = [&](const std::optional<std::size_t>& c) -> std::optional<std::string> {
                if (!c || *c >= row->size()) return std::nullopt;
                return (*row)[*c];
            };
            rec.id = take(id_col);
            rec.text = take(text_col);
            rec.label = take(label_col);
            if (!rec.id || !rec.text || !rec.label)
                rec.error = "row " + std::to_string(lineno) + ": missing field";
            records.push_back(std::move(rec));
        }
    } else {
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            RawSeedRecord rec;
            try {
                json j = json::parse(line);
                auto take = [&](const std::string& key) -> std::optional<std::string> {
                    if (!j.contains(key) || !j[key].is_string()) return std::nullopt;
                    return j[key].get<std::string>();
                };
                rec.id = take(fields.id);
                rec.text = take(fields.text);
                rec.label = take(fields.emotion_label);
                if (!rec.id || !rec.text || !rec.label)
                    rec.error = "line " + std::to_string(lineno) + ": missing field";
            } catch (const json::parse_error& e) {
                rec.error = "line " + std::to_string(lineno) + ": " + e.what();
            }
            records.push_back(std::move(rec));
        }
    }
    return records;
}

struct ScreeningResult {
    std::vector<SeedPost> posts;
    ScreeningReport report;
};

/// Screen raw records. Retained posts satisfy both the label and the
/// inclusive length predicates; order matches the input. Rejections are
/// attributed to the first applicable cause in the order malformed,
/// duplicate id, wrong label, too short, too long.
inline ScreeningResult screen_seed_records(const std::vector<RawSeedRecord>& records,
                                           const SeedScreeningConfig& config) {
    config.validate();
    ScreeningResult result;
    std::unordered_set<std::string> seen_ids;
    for (const auto& rec : records) {
        ++result.report.total;
        if (!rec.error.empty()) {
            result.report.count(RejectCause::Malformed);
            result.report.errors.push_back(rec.error);
            continue;
        }
        if (!seen_ids.insert(*rec.id).second) {
            result.report.count(RejectCause::DuplicateId);
            result.report.errors.push_back("duplicate id: " + *rec.id);
            continue;
        }
        if (!config.negative_labels.contains(*rec.label)) {
            result.report.count(RejectCause::WrongLabel);
            continue;
        }
        SeedPost post = make_seed_post(*rec.id, *rec.text, *rec.label);
        if (post.token_length < config.min_len) {
            result.report.count(RejectCause::TooShort);
            continue;
        }
        if (post.token_length > config.max_len) {
            result.report.count(RejectCause::TooLong);
            continue;
        }
        ++result.report.retained;
        result.posts.push_back(std::move(post));
    }
    return result;
}

inline ScreeningResult load_seed_posts(std::istream& in, SeedInputFormat format,
                                       const SeedRecordFields& fields,
                                       const SeedScreeningConfig& config) {
    return screen_seed_records(read_seed_records(in, format, fields), config);
}

inline SeedInputFormat seed_format_from_path(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    for (char& c : ext)
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    if (ext == ".csv" || ext == ".tsv") return SeedInputFormat::Csv;
    return SeedInputFormat::Jsonl;
}

}  // namespace chataug

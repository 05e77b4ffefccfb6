#include <sstream>

#include <catch2/catch_amalgamated.hpp>

#include "chataug/ingest.hpp"

#include "support/helpers.hpp"

using namespace chataug;

namespace {

std::string words(std::size_t n) {
    std::string out;
    for (std::size_t i = 0; i < n; ++i) {
        if (i) out += ' ';
        out += "w" + std::to_string(i);
    }
    return out;
}

ScreeningResult screen_csv(const std::string& csv, const SeedScreeningConfig& cfg = {},
                           const SeedRecordFields& fields = {}) {
    std::istringstream in(csv);
    return load_seed_posts(in, SeedInputFormat::Csv, fields, cfg);
}

}  // namespace

TEST_CASE("screening keeps negative labels within token bounds", "[ingest]") {
    auto result = screen_csv("id,text,emotion_label\n"
                             "a," + words(20) + ",sad\n"
                             "b," + words(20) + ",joyful\n");
    REQUIRE(result.posts.size() == 1);
    CHECK(result.posts[0].id == "a");
    CHECK(result.posts[0].emotion_label == "sad");
    CHECK(result.report.total == 2);
    CHECK(result.report.retained == 1);
    CHECK(result.report.rejected[static_cast<std::size_t>(RejectCause::WrongLabel)] == 1);
}

TEST_CASE("length bounds are inclusive at both ends", "[ingest]") {
    auto result = screen_csv("id,text,emotion_label\n"
                             "nine," + words(9) + ",afraid\n"
                             "ten," + words(10) + ",afraid\n"
                             "sixty," + words(60) + ",afraid\n"
                             "sixtyone," + words(61) + ",afraid\n");
    REQUIRE(result.posts.size() == 2);
    CHECK(result.posts[0].id == "ten");
    CHECK(result.posts[1].id == "sixty");
    CHECK(result.report.rejected[static_cast<std::size_t>(RejectCause::TooShort)] == 1);
    CHECK(result.report.rejected[static_cast<std::size_t>(RejectCause::TooLong)] == 1);
}

TEST_CASE("duplicate ids are rejected, first occurrence wins", "[ingest]") {
    auto result = screen_csv("id,text,emotion_label\n"
                             "x," + words(15) + ",lonely\n"
                             "x," + words(16) + ",lonely\n");
    REQUIRE(result.posts.size() == 1);
    CHECK(token_count(result.posts[0].text) == 15);
    CHECK(result.report.rejected[static_cast<std::size_t>(RejectCause::DuplicateId)] == 1);
}

TEST_CASE("malformed records collect errors and are skipped", "[ingest]") {
    auto result = screen_csv("id,text\n"
                             "a," + words(15) + "\n");
    CHECK(result.posts.empty());
    CHECK(result.report.errors.size() == 1);
    CHECK(result.report.rejected[static_cast<std::size_t>(RejectCause::Malformed)] == 1);
}

TEST_CASE("accounting identity retained + rejected = total", "[ingest]") {
    auto result = screen_csv("id,text,emotion_label\n"
                             "a," + words(15) + ",sad\n"
                             "b," + words(15) + ",joyful\n"
                             "c," + words(5) + ",sad\n"
                             "d," + words(70) + ",sad\n"
                             "a," + words(15) + ",sad\n");
    std::size_t rejected = 0;
    for (auto n : result.report.rejected) rejected += n;
    CHECK(result.report.retained + rejected == result.report.total);
    CHECK(result.report.total == 5);
}

TEST_CASE("retained order matches input order", "[ingest]") {
    auto result = screen_csv("id,text,emotion_label\n"
                             "z," + words(12) + ",sad\n"
                             "m," + words(13) + ",angry\n"
                             "a," + words(14) + ",anxious\n");
    REQUIRE(result.posts.size() == 3);
    CHECK(result.posts[0].id == "z");
    CHECK(result.posts[1].id == "m");
    CHECK(result.posts[2].id == "a");
}

TEST_CASE("csv quoting: commas, escaped quotes, embedded newlines", "[ingest]") {
    const std::string text = words(12);
    auto result = screen_csv("id,text,emotion_label\n"
                             "q1,\"" + text + ", truly\",sad\n"
                             "q2,\"she said \"\"no\"\" " + text + "\",sad\n"
                             "q3,\"line one " + text + "\nline two\",sad\n");
    REQUIRE(result.posts.size() == 3);
    CHECK(result.posts[0].text == text + ", truly");
    CHECK(result.posts[1].text == "she said \"no\" " + text);
    CHECK(result.posts[2].text.find('\n') != std::string::npos);
}

TEST_CASE("crlf line endings are handled", "[ingest]") {
    auto result = screen_csv("id,text,emotion_label\r\n"
                             "a," + words(15) + ",sad\r\n");
    REQUIRE(result.posts.size() == 1);
    CHECK(result.posts[0].text == words(15));
}

TEST_CASE("configurable field names", "[ingest]") {
    SeedRecordFields fields;
    fields.id = "post_id";
    fields.text = "body";
    fields.emotion_label = "label";
    auto result = screen_csv("post_id,body,label\n"
                             "p1," + words(15) + ",devastated\n",
                             {}, fields);
    REQUIRE(result.posts.size() == 1);
    CHECK(result.posts[0].id == "p1");
}

TEST_CASE("jsonl input format", "[ingest]") {
    std::istringstream in("{\"id\":\"j1\",\"text\":\"" + words(15) +
                          "\",\"emotion_label\":\"ashamed\"}\n"
                          "{\"id\":\"j2\",\"text\":\"" + words(15) + "\"}\n");
    auto result = load_seed_posts(in, SeedInputFormat::Jsonl, {}, {});
    REQUIRE(result.posts.size() == 1);
    CHECK(result.posts[0].id == "j1");
    CHECK(result.report.rejected[static_cast<std::size_t>(RejectCause::Malformed)] == 1);
}

TEST_CASE("format detection from extension", "[ingest]") {
    CHECK(seed_format_from_path("seeds.csv") == SeedInputFormat::Csv);
    CHECK(seed_format_from_path("seeds.jsonl") == SeedInputFormat::Jsonl);
    CHECK(seed_format_from_path("SEEDS.CSV") == SeedInputFormat::Csv);
}

TEST_CASE("custom label set and bounds", "[ingest]") {
    SeedScreeningConfig cfg;
    cfg.negative_labels = {"blue"};
    cfg.min_len = 2;
    cfg.max_len = 4;
    auto result = screen_csv("id,text,emotion_label\n"
                             "a,one two three,blue\n"
                             "b,one two three,sad\n",
                             cfg);
    REQUIRE(result.posts.size() == 1);
    CHECK(result.posts[0].id == "a");
}

TEST_CASE("screening config validation", "[ingest]") {
    SeedScreeningConfig cfg;
    cfg.min_len = 20;
    cfg.max_len = 10;
    CHECK_THROWS_WITH(cfg.validate(), Catch::Matchers::ContainsSubstring("ingest.min_len"));
    cfg = {};
    cfg.negative_labels.clear();
    CHECK_THROWS_WITH(cfg.validate(),
                      Catch::Matchers::ContainsSubstring("ingest.negative_labels"));
}

TEST_CASE("screening report JSON shape", "[ingest]") {
    auto result = screen_csv("id,text,emotion_label\n"
                             "a," + words(15) + ",sad\n");
    json j = result.report;
    CHECK(j.at("total") == 1);
    CHECK(j.at("retained") == 1);
    CHECK(j.at("rejected").at("wrong_label") == 0);
}

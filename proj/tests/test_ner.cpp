#include <doctest.h>

#include "chmc/errors.hpp"
#include "chmc/ner.hpp"
#include "chmc/utf8.hpp"
#include "test_support.hpp"

using namespace chmc;

namespace {

// independent offset oracle: locate a substring and count scalar values
// before it
std::pair<size_t, size_t> cp_span_of(const std::string& text, const std::string& needle) {
    const size_t byte_pos = text.find(needle);
    REQUIRE(byte_pos != std::string::npos);
    const size_t start = utf8::length(text.substr(0, byte_pos));
    return {start, start + utf8::length(needle)};
}

EntitySpan find_span(const std::vector<EntitySpan>& spans, EntityType type) {
    for (const auto& s : spans)
        if (s.type == type) return s;
    REQUIRE(false);
    return {};
}

}  // namespace

TEST_CASE("hashtag offsets match the string-index oracle") {
    const std::string text = "Families told to be ready #nswfires";
    auto spans = annotate(text, Gazetteer());
    REQUIRE(spans.size() == 1);
    auto [start, end] = cp_span_of(text, "#nswfires");
    CHECK(spans[0].start == start);
    CHECK(spans[0].end == end);
    CHECK(spans[0].start == 26);
    CHECK(spans[0].end == 35);
    CHECK(spans[0].type == EntityType::Hashtag);
    CHECK(spans[0].surface == "#nswfires");
}

TEST_CASE("empty text annotates to nothing") { CHECK(annotate("", Gazetteer()).empty()); }

TEST_CASE("number pattern plus gazetteer location") {
    Gazetteer gaz;
    gaz.add(EntityType::Location, "Chile");
    const std::string text = "M8.2 quake in Chile";
    auto spans = annotate(text, gaz);
    REQUIRE(spans.size() == 2);
    auto num = find_span(spans, EntityType::Number);
    CHECK(num.surface == "8.2");
    auto [ns, ne] = cp_span_of(text, "8.2");
    CHECK(num.start == ns);
    CHECK(num.end == ne);
    auto loc = find_span(spans, EntityType::Location);
    CHECK(loc.surface == "Chile");
}

TEST_CASE("url, phone, date and thousands-grouped numbers") {
    Gazetteer gaz;
    auto spans = annotate("update http://t.co/xyz call 555-301-8842 by March 14, 2021 about 2,500 homes", gaz);
    CHECK(find_span(spans, EntityType::Url).surface == "http://t.co/xyz");
    CHECK(find_span(spans, EntityType::PhoneNumber).surface == "555-301-8842");
    CHECK(find_span(spans, EntityType::Date).surface == "March 14, 2021");
    CHECK(find_span(spans, EntityType::Number).surface == "2,500");
}

TEST_CASE("numeric dates are dates, not phone numbers") {
    auto spans = annotate("deadline 2020-08-04 ok", Gazetteer());
    REQUIRE(spans.size() == 1);
    CHECK(spans[0].type == EntityType::Date);
    CHECK(spans[0].surface == "2020-08-04");
}

TEST_CASE("bare month words do not become dates") {
    auto spans = annotate("we may march to the square", Gazetteer());
    CHECK(spans.empty());
}

TEST_CASE("urls strip trailing punctuation and www prefix works") {
    auto spans = annotate("see www.example.org/a, thanks", Gazetteer());
    REQUIRE(spans.size() == 1);
    CHECK(spans[0].surface == "www.example.org/a");
}

TEST_CASE("multi-word gazetteer entries match case-insensitively") {
    Gazetteer gaz;
    gaz.add(EntityType::Location, "Blue Mtns");
    gaz.add(EntityType::Organization, "Red Cross");
    auto spans = annotate("fire sweeps through blue mtns says RED CROSS", gaz);
    REQUIRE(spans.size() == 2);
    CHECK(spans[0].type == EntityType::Location);
    CHECK(spans[0].surface == "blue mtns");
    CHECK(spans[1].type == EntityType::Organization);
}

TEST_CASE("resolve_overlaps keeps longest, then start, then type order") {
    std::vector<EntitySpan> in = {{0, 5, EntityType::Person, ""},
                                  {0, 9, EntityType::Organization, ""}};
    auto out = resolve_overlaps(in);
    REQUIRE(out.size() == 1);
    CHECK(out[0].type == EntityType::Organization);

    std::vector<EntitySpan> disjoint = {{0, 3, EntityType::Person, ""},
                                        {5, 8, EntityType::Location, ""}};
    CHECK(resolve_overlaps(disjoint).size() == 2);

    std::vector<EntitySpan> tie = {{0, 4, EntityType::Location, ""},
                                   {0, 4, EntityType::Person, ""}};
    auto resolved = resolve_overlaps(tie);
    REQUIRE(resolved.size() == 1);
    CHECK(resolved[0].type == EntityType::Person);  // person precedes location
}

TEST_CASE("annotate output is a fixed point of resolve_overlaps") {
    Gazetteer gaz;
    gaz.add(EntityType::Location, "Chile");
    gaz.add(EntityType::Person, "Maria Solis");
    const std::string text =
        "Maria Solis reports from Chile #quake http://t.co/q 555-301-8842 on March 14";
    auto spans = annotate(text, gaz);
    auto again = resolve_overlaps(spans);
    CHECK(again == spans);
    for (size_t i = 1; i < spans.size(); ++i) CHECK(spans[i - 1].end <= spans[i].start);
}

TEST_CASE("unicode offsets count scalar values") {
    // 4 emoji (one scalar value each in the count) before the hashtag
    const std::string text = "\xF0\x9F\x94\xA5\xF0\x9F\x94\xA5 fire \xF0\x9F\x98\xA8 #help";
    auto spans = annotate(text, Gazetteer());
    REQUIRE(spans.size() == 1);
    auto [s, e] = cp_span_of(text, "#help");
    CHECK(spans[0].start == s);
    CHECK(spans[0].end == e);
    CHECK(utf8::substr(text, spans[0].start, spans[0].end) == "#help");
}

TEST_CASE("strict F1 worked examples") {
    using Doc = std::vector<EntitySpan>;
    Doc g1 = {{0, 5, EntityType::Location, ""}};

    // identical predictions
    NerScore perfect = strict_ner_f1({g1}, {g1});
    CHECK(perfect.f1 == doctest::Approx(1.0));

    // type mismatch under strict matching
    Doc p_type = {{0, 5, EntityType::Person, ""}};
    NerScore mismatch = strict_ner_f1({g1}, {p_type});
    CHECK(mismatch.f1 == doctest::Approx(0.0));

    // 3 gold, 2 correct + 1 spurious -> P = R = F1 = 2/3
    Doc g3 = {{0, 2, EntityType::Location, ""},
              {3, 5, EntityType::Person, ""},
              {6, 9, EntityType::Date, ""}};
    Doc p3 = {{0, 2, EntityType::Location, ""},
              {3, 5, EntityType::Person, ""},
              {10, 12, EntityType::Number, ""}};
    NerScore partial = strict_ner_f1({g3}, {p3});
    CHECK(partial.precision == doctest::Approx(2.0 / 3.0));
    CHECK(partial.recall == doctest::Approx(2.0 / 3.0));
    CHECK(partial.f1 == doctest::Approx(2.0 / 3.0));

    CHECK_THROWS_AS(strict_ner_f1({g1}, {}), ValidationError);
}

TEST_CASE("strict F1 monotonicity: removing a correct prediction lowers recall") {
    using Doc = std::vector<EntitySpan>;
    Doc gold = {{0, 2, EntityType::Location, ""}, {3, 5, EntityType::Person, ""}};
    Doc full = gold;
    Doc reduced = {{0, 2, EntityType::Location, ""}};
    CHECK(strict_ner_f1({gold}, {full}).recall > strict_ner_f1({gold}, {reduced}).recall);
}

TEST_CASE("validate_spans rejects bad spans") {
    CHECK_THROWS_AS(validate_spans("abc", {{0, 9, EntityType::Number, ""}}), ValidationError);
    CHECK_THROWS_AS(validate_spans("abc def", {{0, 3, EntityType::Number, "abc"},
                                               {2, 5, EntityType::Number, "c d"}}),
                    ValidationError);
    CHECK_THROWS_AS(validate_spans("abc", {{0, 2, EntityType::Number, "zz"}}), ValidationError);
    CHECK_NOTHROW(validate_spans("abc", {{0, 2, EntityType::Number, "ab"}}));
}

#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "chmc/errors.hpp"
#include "chmc/tokenizer.hpp"
#include "test_support.hpp"

using namespace chmc;

TEST_CASE("vocab training follows the frequency merge oracle") {
    // corpus "aa aa ab": base symbols {a, ##a, ##b}; the most frequent pair
    // (a, ##a) with count 2 merges into "aa"
    Vocab v = Vocab::train({"aa aa ab"}, kNumSpecials + 3 + 1);
    CHECK(v.size() == kNumSpecials + 4);
    CHECK(v.id_of("aa") >= kNumSpecials);
    CHECK(v.id_of("a") >= kNumSpecials);
    CHECK(v.id_of("##a") >= kNumSpecials);
    CHECK(v.id_of("##b") >= kNumSpecials);
}

TEST_CASE("vocab training errors") {
    CHECK_THROWS_AS(Vocab::train({}, 100), ValidationError);
    CHECK_THROWS_AS(Vocab::train({"   "}, 100), ValidationError);
    CHECK_THROWS_AS(Vocab::train({"aa ab"}, kNumSpecials + 2), ConfigError);
}

TEST_CASE("vocab files are byte-identical across retrains") {
    std::vector<std::string> texts = {"the fire spread fast", "fire crews on the scene",
                                      "the the the"};
    const std::string p1 = chmc_test::temp_dir("vocab1") + "/v.txt";
    const std::string p2 = chmc_test::temp_dir("vocab2") + "/v.txt";
    Vocab::train(texts, 40).save(p1);
    Vocab::train(texts, 40).save(p2);
    std::ifstream a(p1), b(p2);
    std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    CHECK(sa == sb);
    CHECK(!sa.empty());

    Vocab loaded = Vocab::load(p1);
    CHECK(loaded.size() == Vocab::train(texts, 40).size());
    CHECK(loaded.token(kClsId) == "[CLS]");
}

TEST_CASE("encode replaces entity spans with single entity tokens") {
    Vocab v = Vocab::train({"fire in sydney harbour"}, 64);
    SUBCASE("single span") {
        auto seq = encode("fire in Sydney", {{8, 14, EntityType::Location, "Sydney"}}, v, 8);
        REQUIRE(seq.size() == 8);
        CHECK(seq.ids[0] == kClsId);
        CHECK(v.token(seq.ids[1]) == "fire");
        CHECK(v.token(seq.ids[2]) == "in");
        CHECK(seq.ids[3] == entity_token_id(EntityType::Location));
        CHECK(seq.ids[4] == kSepId);
        CHECK(seq.ids[5] == kPadId);
        CHECK(seq.is_entity[3] == 1);
        CHECK(seq.is_special[0] == 1);
        CHECK(seq.is_special[4] == 1);
        CHECK(seq.alignment[3].entity_index == 0);
    }
    SUBCASE("no entities means no entity flags") {
        auto seq = encode("fire in sydney", {}, v, 8);
        for (size_t i = 0; i < seq.size(); ++i) CHECK(seq.is_entity[i] == 0);
    }
    SUBCASE("adjacent entities collapse to adjacent tokens") {
        const std::string text = "#nswfires http://t.co/x";
        auto seq = encode(text,
                          {{0, 9, EntityType::Hashtag, "#nswfires"},
                           {10, 23, EntityType::Url, "http://t.co/x"}},
                          v, 4);
        REQUIRE(seq.size() == 4);
        CHECK(seq.ids[0] == kClsId);
        CHECK(seq.ids[1] == entity_token_id(EntityType::Hashtag));
        CHECK(seq.ids[2] == entity_token_id(EntityType::Url));
        CHECK(seq.ids[3] == kSepId);
    }
}

TEST_CASE("entity opacity: no subword of a covered surface appears") {
    Vocab v = Vocab::train({"warning for sydney residents", "sydney sydney sydney"}, 60);
    REQUIRE(v.id_of("sydney") >= 0);  // frequent enough to merge fully
    auto seq = encode("warning for Sydney residents", {{12, 18, EntityType::Location, "Sydney"}},
                      v, 16);
    for (size_t i = 0; i < seq.size(); ++i) {
        if (seq.ids[i] < kNumSpecials) continue;
        CHECK(v.token(seq.ids[i]).find("sydney") == std::string::npos);
    }
}

TEST_CASE("length law and truncation before SEP") {
    Vocab v = Vocab::train({"a b c d e f g h i j"}, 64);
    auto seq = encode("a b c d e f g h i j", {}, v, 6);
    CHECK(seq.size() == 6);
    CHECK(seq.ids[0] == kClsId);
    CHECK(seq.ids[5] == kSepId);  // truncated content, SEP still last
    CHECK(seq.content_length() == 6);

    auto seq2 = encode("a b", {}, v, 6);
    CHECK(seq2.content_length() == 4);  // CLS a b SEP
    CHECK(seq2.ids[3] == kSepId);
    CHECK(seq2.ids[4] == kPadId);
}

TEST_CASE("decode round-trips entity-free known text and renders placeholders") {
    Vocab v = Vocab::train({"fire in sydney", "all known words here fire"}, 80);
    auto seq = encode("fire in sydney", {}, v, 16);
    CHECK(decode(seq, v) == "fire in sydney");

    TokenSequence ent;
    ent.ids = {kClsId, entity_token_id(EntityType::Location), kSepId};
    ent.is_special = {1, 0, 1};
    ent.is_entity = {0, 1, 0};
    ent.is_continuation = {0, 0, 0};
    ent.alignment.resize(3);
    CHECK(decode(ent, v) == "<location>");

    TokenSequence pads;
    pads.ids = {kPadId, kPadId};
    pads.is_special = {1, 1};
    pads.is_entity = {0, 0};
    pads.is_continuation = {0, 0};
    pads.alignment.resize(2);
    CHECK(decode(pads, v) == "");
}

TEST_CASE("continuation subwords join without spaces on decode") {
    // one merge only: "abc" must split into "ab" + "##c"
    Vocab v = Vocab::train({"ab abc"}, kNumSpecials + 4);
    auto seq = encode("abc", {}, v, 8);
    CHECK(seq.is_continuation[2] == 1);
    CHECK(decode(seq, v) == "abc");
}

TEST_CASE("unknown words become UNK and ids stay in range") {
    Vocab v = Vocab::train({"abc"}, kNumSpecials + 4);
    auto seq = encode("xyz abc", {}, v, 8);
    CHECK(seq.ids[1] == kUnkId);
    CHECK_THROWS_AS(v.token(static_cast<int>(v.size())), ValidationError);
}

TEST_CASE("flag soundness: entity positions decode to placeholder names") {
    Vocab v = Vocab::train({"x y z"}, 40);
    auto seq = encode("x Chile y", {{2, 7, EntityType::Location, "Chile"}}, v, 8);
    for (size_t i = 0; i < seq.size(); ++i) {
        if (seq.is_entity[i]) {
            CHECK(v.token(seq.ids[i]).front() == '<');
            CHECK(v.token(seq.ids[i]).back() == '>');
        }
    }
}

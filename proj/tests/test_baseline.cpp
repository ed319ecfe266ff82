#include <doctest.h>

#include <cmath>

#include "chmc/baseline.hpp"
#include "chmc/errors.hpp"
#include "test_support.hpp"

using namespace chmc;

TEST_CASE("idf formula matches the smoothed definition") {
    // term in every doc: idf = ln(1) + 1 = 1
    TfidfConfig cfg;
    cfg.max_features = 10;
    TfidfSpace space = TfidfSpace::fit({"storm hits", "storm passes"}, cfg);
    const auto& terms = space.terms();
    const auto it = std::find(terms.begin(), terms.end(), "storm");
    REQUIRE(it != terms.end());
    const size_t idx = static_cast<size_t>(it - terms.begin());
    CHECK(space.idf()[idx] == doctest::Approx(1.0).epsilon(1e-12));

    // N = 2, df = 1: idf = ln(3/2) + 1
    const auto hit = std::find(terms.begin(), terms.end(), "hits");
    REQUIRE(hit != terms.end());
    CHECK(space.idf()[static_cast<size_t>(hit - terms.begin())] ==
          doctest::Approx(std::log(1.5) + 1.0).epsilon(1e-12));
}

TEST_CASE("vocabulary cap keeps lexicographically smaller term on ties") {
    TfidfConfig cfg;
    cfg.max_features = 1;
    TfidfSpace space = TfidfSpace::fit({"zebra apple"}, cfg);
    REQUIRE(space.size() == 1);
    CHECK(space.terms()[0] == "apple");
}

TEST_CASE("tfidf fit is deterministic and rejects empty corpora") {
    TfidfConfig cfg;
    cfg.ngram_max = 2;
    cfg.max_features = 50;
    std::vector<std::string> texts = {"flood waters rising", "rising fast", "flood warning"};
    TfidfSpace a = TfidfSpace::fit(texts, cfg);
    TfidfSpace b = TfidfSpace::fit(texts, cfg);
    CHECK(a.terms() == b.terms());
    CHECK(a.idf() == b.idf());
    CHECK_THROWS_AS(TfidfSpace::fit({}, cfg), ValidationError);
    TfidfConfig bad;
    bad.ngram_min = 3;
    bad.ngram_max = 2;
    CHECK_THROWS_AS(TfidfSpace::fit(texts, bad), ConfigError);
}

TEST_CASE("transform weights and normalization") {
    TfidfConfig cfg;
    cfg.max_features = 10;
    TfidfSpace space = TfidfSpace::fit({"aa bb", "aa cc"}, cfg);

    // single in-vocabulary term -> unit weight
    SparseDoc one = space.transform("bb");
    REQUIRE(one.entries.size() == 1);
    CHECK(one.entries[0].second == doctest::Approx(1.0));

    // empty text -> empty doc
    CHECK(space.transform("").entries.empty());
    CHECK(space.transform("zz qq").entries.empty());  // unseen terms dropped

    // equal-idf terms with counts (2,1): weights (2,1)/sqrt(5)
    SparseDoc two = space.transform("bb bb cc");
    REQUIRE(two.entries.size() == 2);
    double wb = 0, wc = 0;
    for (auto [idx, w] : two.entries) {
        if (space.terms()[idx] == "bb") wb = w;
        if (space.terms()[idx] == "cc") wc = w;
    }
    CHECK(wb == doctest::Approx(2.0 / std::sqrt(5.0)).epsilon(1e-6));
    CHECK(wc == doctest::Approx(1.0 / std::sqrt(5.0)).epsilon(1e-6));

    // strictly increasing indices
    for (size_t i = 1; i < two.entries.size(); ++i)
        CHECK(two.entries[i - 1].first < two.entries[i].first);
}

namespace {

// tiny separable dataset over 2 features
struct ToyData {
    std::vector<SparseDoc> docs;
    std::vector<uint8_t> y;
};

ToyData separable() {
    ToyData d;
    for (int i = 0; i < 20; ++i) {
        SparseDoc doc;
        const bool pos = i % 2 == 0;
        doc.entries.emplace_back(0, pos ? 1.0f : -1.0f);
        doc.entries.emplace_back(1, pos ? 0.5f : -0.5f);
        d.docs.push_back(doc);
        d.y.push_back(pos ? 1 : 0);
    }
    return d;
}

}  // namespace

TEST_CASE("separable data is classified correctly with weak regularization") {
    ToyData d = separable();
    LogRegOptions opts;
    opts.l2 = 1e-4;
    OvrLogReg model = train_ovr_logreg(d.docs, {"L"}, {d.y}, opts);
    REQUIRE(model.trained[0] == 1);
    for (size_t i = 0; i < d.docs.size(); ++i) {
        const double s = model.score(0, d.docs[i]);
        CHECK((s >= 0.5) == (d.y[i] == 1));
    }
}

TEST_CASE("optimizer reaches the gradient tolerance") {
    ToyData d = separable();
    LogRegOptions opts;
    opts.l2 = 0.1;
    OvrLogReg model = train_ovr_logreg(d.docs, {"L"}, {d.y}, opts);
    CHECK(model.final_grad_norm[0] < 1e-6);
}

TEST_CASE("seed independence of the convex objective") {
    ToyData d = separable();
    LogRegOptions a, b;
    a.l2 = b.l2 = 0.05;
    a.seed = 1;
    b.seed = 999;
    OvrLogReg ma = train_ovr_logreg(d.docs, {"L"}, {d.y}, a);
    OvrLogReg mb = train_ovr_logreg(d.docs, {"L"}, {d.y}, b);
    CHECK(std::abs(ma.final_objective[0] - mb.final_objective[0]) < 1e-8);
}

TEST_CASE("doubling l2 never increases the weight norm") {
    ToyData d = separable();
    double prev_norm = 1e9;
    for (double l2 : {0.01, 0.02, 0.04, 0.08, 0.16}) {
        LogRegOptions opts;
        opts.l2 = l2;
        OvrLogReg m = train_ovr_logreg(d.docs, {"L"}, {d.y}, opts);
        double norm = 0.0;
        for (float w : m.weights[0]) norm += static_cast<double>(w) * w;
        norm = std::sqrt(norm);
        CHECK(norm <= prev_norm + 1e-9);
        prev_norm = norm;
    }
}

TEST_CASE("labels without both classes are skipped and score zero") {
    ToyData d = separable();
    std::vector<uint8_t> all_pos(d.docs.size(), 1);
    OvrLogReg model = train_ovr_logreg(d.docs, {"A", "B"}, {d.y, all_pos}, {});
    CHECK(model.trained[0] == 1);
    CHECK(model.trained[1] == 0);
    CHECK(model.score(1, d.docs[0]) == 0.0);
}

TEST_CASE("predict_baseline mirrors the max-over-children rule") {
    const auto& onto = chmc_test::ontology();
    // zero weights -> every trained label scores 0.5 -> inclusive threshold predicts all
    OvrLogReg model;
    model.n_features = 2;
    model.labels = {onto.lower_labels().begin(), onto.lower_labels().end()};
    model.weights.assign(25, std::vector<float>(2, 0.0f));
    model.bias.assign(25, 0.0f);
    model.trained.assign(25, 1);
    SparseDoc doc;
    doc.entries.emplace_back(0, 1.0f);
    auto pred = predict_baseline(model, doc, 0.5, onto);
    CHECK(pred.lower.size() == 25);
    CHECK(pred.upper.size() == 4);

    // a single confident label pulls its parent in
    OvrLogReg one = model;
    for (auto& w : one.weights) w[0] = -10.0f;
    one.weights[onto.lower_index("GoodsServices")][0] = 10.0f;
    auto p1 = predict_baseline(one, doc, 0.5, onto);
    CHECK(p1.lower == std::set<std::string>{"GoodsServices"});
    CHECK(p1.upper == std::set<std::string>{"Request"});

    // hand-computed sigmoid check
    OvrLogReg hand = model;
    hand.weights[0][0] = 0.75f;
    hand.bias[0] = -0.25f;
    const double z = 0.75 * 1.0 - 0.25;
    const double expect = 1.0 / (1.0 + std::exp(-z));
    CHECK(hand.score(0, doc) == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("model round-trips through the JSON + binary pair") {
    ToyData d = separable();
    OvrLogReg model = train_ovr_logreg(d.docs, {"L"}, {d.y}, {});
    const std::string dir = chmc_test::temp_dir("logreg");
    model.save(dir + "/m.json", dir + "/m.bin");
    OvrLogReg back = OvrLogReg::load(dir + "/m.json", dir + "/m.bin");
    CHECK(back.labels == model.labels);
    CHECK(back.weights[0] == model.weights[0]);
    CHECK(back.bias[0] == model.bias[0]);
}

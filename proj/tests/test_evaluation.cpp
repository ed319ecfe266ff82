#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "chmc/errors.hpp"
#include "chmc/evaluation.hpp"
#include "test_support.hpp"

using namespace chmc;
using chmc_test::ontology;

namespace {

using Sets = std::vector<std::set<std::string>>;

Corpus event_corpus(const std::vector<std::tuple<std::string, std::string, std::string>>& rows) {
    Corpus c;
    size_t i = 0;
    for (const auto& [event_id, event_type, label] : rows) {
        AnnotatedTweet t;
        t.id = std::to_string(i++);
        t.event_id = event_id;
        t.event_type = event_type;
        t.text = "x";
        if (!label.empty()) t.lower_labels = {label};
        t.upper_labels = chmc_test::ontology().derive_upper(t.lower_labels);
        c.push_back(t);
    }
    return c;
}

}  // namespace

TEST_CASE("macro F1 worked example") {
    // label A: gold {d1,d2}, pred {d1} -> F1 2/3
    // label B: gold {d3}, pred {d2,d3} -> P 0.5, R 1 -> F1 2/3
    Sets gold = {{"A"}, {"A"}, {"B"}};
    Sets pred = {{"A"}, {"B"}, {"B"}};
    auto res = macro_f1(pred, gold, {"A", "B"});
    CHECK(res.macro_f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-9));
    CHECK(res.per_label[0].f1 == doctest::Approx(2.0 / 3.0));
    CHECK(res.per_label[1].precision == doctest::Approx(0.5));
    CHECK(res.per_label[1].recall == doctest::Approx(1.0));

    auto perfect = macro_f1(gold, gold, {"A", "B"});
    CHECK(perfect.macro_f1 == doctest::Approx(1.0));

    CHECK_THROWS_AS(macro_f1(pred, {{"A"}}, {"A"}), ValidationError);
}

TEST_CASE("macro F1 zero-support conventions") {
    Sets gold = {{"A"}, {}};
    Sets pred = {{"A"}, {}};
    // default: zero-support label C included at F1 = 0
    auto inc = macro_f1(pred, gold, {"A", "C"});
    CHECK(inc.macro_f1 == doctest::Approx(0.5));
    // skip mode: C has no gold and no predictions -> dropped from the macro
    auto skip = macro_f1(pred, gold, {"A", "C"}, true);
    CHECK(skip.macro_f1 == doctest::Approx(1.0));
    // but spurious predictions keep the label in the macro even in skip mode
    Sets pred2 = {{"A", "C"}, {}};
    auto skip2 = macro_f1(pred2, gold, {"A", "C"}, true);
    CHECK(skip2.macro_f1 == doctest::Approx(0.5));
}

TEST_CASE("macro F1 is invariant to document and label order") {
    Sets gold = {{"A"}, {"B"}, {"A", "B"}, {}};
    Sets pred = {{"A"}, {}, {"B"}, {"A"}};
    auto r1 = macro_f1(pred, gold, {"A", "B"});
    Sets gold2 = {gold[3], gold[2], gold[1], gold[0]};
    Sets pred2 = {pred[3], pred[2], pred[1], pred[0]};
    auto r2 = macro_f1(pred2, gold2, {"B", "A"});
    CHECK(r1.macro_f1 == doctest::Approx(r2.macro_f1).epsilon(1e-12));
}

TEST_CASE("AIT macro equals macro restricted to the six labels") {
    const auto& onto = ontology();
    Sets gold, pred;
    for (size_t i = 0; i < 40; ++i) {
        std::set<std::string> g, p;
        g.insert(onto.lower_labels()[i % 25]);
        if (i % 3 == 0) p.insert(onto.lower_labels()[i % 25]);
        if (i % 7 == 0) p.insert("MovePeople");
        gold.push_back(g);
        pred.push_back(p);
    }
    std::vector<std::string> ait(onto.ait().begin(), onto.ait().end());
    auto direct = macro_f1(pred, gold, ait);
    // restricted computation: filter label sets to AIT labels first
    Sets gold_r, pred_r;
    for (size_t i = 0; i < gold.size(); ++i) {
        std::set<std::string> g, p;
        for (const auto& l : gold[i])
            if (onto.ait().count(l)) g.insert(l);
        for (const auto& l : pred[i])
            if (onto.ait().count(l)) p.insert(l);
        gold_r.push_back(g);
        pred_r.push_back(p);
    }
    auto restricted = macro_f1(pred_r, gold_r, ait);
    CHECK(direct.macro_f1 == restricted.macro_f1);
}

TEST_CASE("per-event-type aggregation") {
    const auto& onto = ontology();
    SUBCASE("identical per-event scores give zero stddev") {
        Corpus c = event_corpus({{"e1", "flood", "News"}, {"e2", "flood", "News"}});
        Sets pred = {{"News"}, {"News"}};
        auto rep = per_event_type_report(pred, c, onto, true, nullptr);
        REQUIRE(rep.count("flood") == 1);
        CHECK(rep["flood"].stddev == doctest::Approx(0.0));
        CHECK(rep["flood"].n_events == 2);
    }
    SUBCASE("two events scoring 0.2 and 0.4 give mean 0.3 stddev 0.1") {
        // event macro over a single label with skip mode: F1 values 0.2/0.4
        // are engineered with partially correct predictions
        // label A gold on 5 docs; pred correct on k of them and spurious on
        // others to hit P=R=F1 targets is fiddly; instead feed scores via
        // two labels with exact F1 0.2 and 0.4:
        // F1 = 2TP/(2TP+FP+FN). TP=1,FP=4,FN=4 -> 2/10=0.2; TP=1,FP=2,FN=1 -> 2/5=0.4
        Corpus c;
        Sets pred;
        auto add_doc = [&](const std::string& ev, bool gold_a, bool pred_a) {
            AnnotatedTweet t;
            t.id = std::to_string(c.size());
            t.event_id = ev;
            t.event_type = "flood";
            t.text = "x";
            if (gold_a) t.lower_labels = {"News"};
            t.upper_labels = onto.derive_upper(t.lower_labels);
            c.push_back(t);
            std::set<std::string> p;
            if (pred_a) p.insert("News");
            pred.push_back(p);
        };
        // event X: TP=1, FN=4, FP=4 over 9 docs
        add_doc("X", true, true);
        for (int i = 0; i < 4; ++i) add_doc("X", true, false);
        for (int i = 0; i < 4; ++i) add_doc("X", false, true);
        // event Y: TP=1, FN=1, FP=2
        add_doc("Y", true, true);
        add_doc("Y", true, false);
        for (int i = 0; i < 2; ++i) add_doc("Y", false, true);
        auto rep = per_event_type_report(pred, c, onto, true, nullptr);
        REQUIRE(rep.count("flood") == 1);
        CHECK(rep["flood"].mean == doctest::Approx(0.3).epsilon(1e-9));
        CHECK(rep["flood"].stddev == doctest::Approx(0.1).epsilon(1e-9));
    }
    SUBCASE("single event per type: mean equals that event's score") {
        Corpus c = event_corpus({{"e1", "fire", "News"}});
        Sets pred = {{"News"}};
        auto rep = per_event_type_report(pred, c, onto, true, nullptr);
        CHECK(rep["fire"].mean == doctest::Approx(1.0));
        CHECK(rep["fire"].n_events == 1);
    }
}

TEST_CASE("evaluate_predictions assembles the full report and files") {
    const auto& onto = ontology();
    Corpus c = event_corpus({{"e1", "flood", "News"},
                             {"e1", "flood", "GoodsServices"},
                             {"e2", "fire", "MovePeople"}});
    Sets pred_lower = {{"News"}, {"GoodsServices"}, {}};
    Sets pred_upper = {{"Report"}, {"Request"}, {}};
    EvalReport rep = evaluate_predictions(pred_upper, pred_lower, c, onto, false);
    CHECK(rep.per_label_lower.size() == 25);
    CHECK(rep.per_label_upper.size() == 4);
    CHECK(rep.macro_f1_lower == doctest::Approx(2.0 / 25.0));
    CHECK(rep.macro_f1_ait == doctest::Approx(1.0 / 6.0));

    const std::string dir = chmc_test::temp_dir("report");
    write_report_json(rep, dir + "/r.json");
    write_report_csv(rep, dir + "/r.csv");
    write_report_svg(rep, dir + "/r.svg");
    std::ifstream json_in(dir + "/r.json");
    nlohmann::json parsed;
    json_in >> parsed;
    CHECK(parsed["schema"] == "eval-v1");
    CHECK(parsed["per_label_lower"].size() == 25);
    std::ifstream csv_in(dir + "/r.csv");
    std::string header;
    std::getline(csv_in, header);
    CHECK(header == "label,support,precision,recall,f1");
    std::ifstream svg_in(dir + "/r.svg");
    std::string svg((std::istreambuf_iterator<char>(svg_in)), std::istreambuf_iterator<char>());
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("<rect") != std::string::npos);
}

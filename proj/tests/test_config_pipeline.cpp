#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "chmc/config.hpp"
#include "chmc/errors.hpp"
#include "chmc/ner_remote.hpp"
#include "chmc/pipeline.hpp"
#include "test_support.hpp"

using namespace chmc;

TEST_CASE("ini parsing, overrides, and typed getters") {
    Config cfg = Config::parse_ini_text(
        "# comment\n"
        "[data]\n"
        "dev_ratio = 0.2\n"
        "[pretrain]\n"
        "alpha=0.3\n"
        "enabled = false\n");
    CHECK(cfg.get_double("data", "dev_ratio") == doctest::Approx(0.2));
    CHECK(cfg.get_double("pretrain", "alpha") == doctest::Approx(0.3));
    CHECK(cfg.get_bool("pretrain", "enabled") == false);
    // untouched keys keep their defaults
    CHECK(cfg.get("finetune", "head") == "hmcn_local");
    CHECK(cfg.get_int("tokenizer", "vocab_size") == 400);

    cfg.set_override("finetune.head=lcl");
    CHECK(cfg.get("finetune", "head") == "lcl");

    CHECK_THROWS_AS(Config::parse_ini_text("[data]\nnope = 1\n"), ConfigError);
    CHECK_THROWS_AS(Config::parse_ini_text("key = 1\n"), ParseError);
    CHECK_THROWS_AS(cfg.set_override("garbage"), ConfigError);
    CHECK_THROWS_AS(cfg.get_int("data", "dev_ratio"), ConfigError);
}

TEST_CASE("config hash is stable and sensitive") {
    Config a, b;
    CHECK(a.hash() == b.hash());
    b.set("finetune", "head", "lcl");
    CHECK(a.hash() != b.hash());
    Config c;
    c.set("finetune", "head", "lcl");
    CHECK(b.hash() == c.hash());
}

TEST_CASE("every registry key appears in the resolved config") {
    Config cfg;
    auto j = cfg.to_json();
    for (const auto& k : config_registry()) {
        REQUIRE(j.contains(k.section));
        CHECK(j[k.section].contains(k.key));
    }
}

TEST_CASE("ablation rows cover the six configurations") {
    const auto& rows = ablation_rows();
    REQUIRE(rows.size() == 6);
    CHECK(rows[0].head == "hmcn_local");
    CHECK(rows[1].head == "lcl");  // -Hierarchy is exactly the LCL head
    CHECK(rows[1].pretrain);
    CHECK(rows[1].entity_tokens);
    CHECK(rows[2].head == "single_task");
    CHECK(!rows[3].pretrain);
    CHECK(rows[3].entity_tokens);
    CHECK(!rows[4].pretrain);
    CHECK(!rows[4].entity_tokens);
    CHECK(rows[5].standard_masking);
    CHECK(!rows[5].entity_tokens);

    // row "-entities" is definitionally the plain single-task baseline
    Config base;
    Config row4 = ablation_row_config(base, rows[4]);
    Config plain;
    plain.set("pretrain", "enabled", "false");
    plain.set("tokenizer", "entity_tokens", "false");
    plain.set("finetune", "head", "single_task");
    CHECK(row4.hash() == plain.hash());
    CHECK(ablation_row_config(base, rows[1]).hash() != row4.hash());
}

TEST_CASE("vocab view strips entity surfaces only when entity tokens are on") {
    Corpus c;
    AnnotatedTweet t;
    t.id = "1";
    t.event_id = "e";
    t.event_type = "flood";
    t.text = "water at Husak now";
    t.entities = {{9, 14, EntityType::Location, "Husak"}};
    c.push_back(t);
    auto masked = vocab_view_texts(c, true);
    CHECK(masked[0].find("Husak") == std::string::npos);
    CHECK(masked[0].find("water") != std::string::npos);
    auto plain = vocab_view_texts(c, false);
    CHECK(plain[0] == t.text);
}

TEST_CASE("remote annotator client validates, retries, and falls back") {
    httplib::Server server;
    std::atomic<int> calls{0};
    server.Post("/annotate", [&](const httplib::Request& req, httplib::Response& res) {
        const int call = calls.fetch_add(1);
        if (call == 0) {
            res.status = 500;  // first request fails, the client must retry
            return;
        }
        auto body = nlohmann::json::parse(req.body);
        nlohmann::json out;
        out["documents"] = nlohmann::json::array();
        for (const auto& doc : body["documents"]) {
            const std::string id = doc["id"];
            const std::string text = doc["text"];
            nlohmann::json entities = nlohmann::json::array();
            if (id == "0") {
                entities.push_back({{"start", 0}, {"end", 4}, {"type", "location"},
                                    {"text", text.substr(0, 4)}});
            } else {
                // out-of-bounds span: the client must reject this document
                entities.push_back({{"start", 0}, {"end", 999}, {"type", "location"},
                                    {"text", "nope"}});
            }
            out["documents"].push_back({{"id", id}, {"entities", entities}});
        }
        res.set_content(out.dump(), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread server_thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    RemoteNerConfig cfg;
    cfg.port = port;
    cfg.max_retries = 3;
    Gazetteer fallback;
    fallback.add(EntityType::Location, "Rome");
    RemoteNerReport report;
    auto spans = fetch_remote_annotations({"Rome is calm", "fire in Rome"}, cfg, fallback, &report);
    REQUIRE(spans.size() == 2);
    CHECK(spans[0].size() == 1);
    CHECK(spans[0][0].end == 4);
    // document 1 was rejected and re-annotated locally via the gazetteer
    CHECK(report.rejected == 1);
    REQUIRE(spans[1].size() == 1);
    CHECK(spans[1][0].surface == "Rome");
    CHECK(report.retries >= 1);

    server.stop();
    server_thread.join();

    RemoteNerConfig dead;
    dead.port = 1;  // nothing listens there
    dead.max_retries = 1;
    dead.timeout_sec = 1;
    CHECK_THROWS_AS(fetch_remote_annotations({"x"}, dead, fallback, nullptr), IoError);
}

namespace {

std::string write_tiny_synth_spec(const std::string& dir, double spurious) {
    nlohmann::ordered_json spec;
    spec["seed"] = 3;
    spec["events_per_type"] = {{"flood", {{"train", 1}, {"test", 1}}}};
    spec["tweets_per_event"] = 30;
    spec["spurious_correlation"] = spurious;
    spec["second_label_p"] = 0.1;
    spec["templates"] = chmc_test::data_path("templates.json");
    const std::string path = dir + "/synth.json";
    std::ofstream out(path);
    out << spec.dump(2);
    return path;
}

}  // namespace

TEST_CASE("tiny pipeline run produces all artifacts and a manifest") {
    const std::string dir = chmc_test::temp_dir("pipeline_smoke");
    const std::string spec_path = write_tiny_synth_spec(dir, 0.5);
    Config cfg;
    cfg.set("data", "synth_spec", spec_path);
    cfg.set("data", "ontology", chmc_test::data_path("ontology.json"));
    cfg.set("tokenizer", "vocab_size", "200");
    cfg.set("tokenizer", "max_len", "32");
    cfg.set("pretrain", "epochs", "1");
    cfg.set("pretrain", "n_layers", "1");
    cfg.set("pretrain", "d_model", "32");
    cfg.set("pretrain", "d_ff", "64");
    cfg.set("pretrain", "eval_interval", "50");
    cfg.set("pretrain", "learning_rate", "1e-3");
    cfg.set("finetune", "epochs", "1");
    cfg.set("finetune", "eval_interval", "50");
    cfg.set("finetune", "learning_rate", "1e-3");

    PipelineResult res = run_pipeline(cfg, dir + "/out", 13, 1);
    namespace fs = std::filesystem;
    for (const char* name :
         {"corpus.jsonl", "split.json", "vocab.txt", "pretrain.ckpt", "pretrain_trace.csv",
          "model.ckpt", "finetune_trace.csv", "report_dev.json", "report_test.json",
          "report_test.csv", "figure_test.svg", "manifest.json"}) {
        CAPTURE(name);
        CHECK(fs::exists(fs::path(dir + "/out") / name));
    }
    std::ifstream min(res.manifest_path);
    nlohmann::json manifest;
    min >> manifest;
    CHECK(manifest["schema"] == "manifest-v1");
    CHECK(manifest["config_hash"] == res.config_hash);
    CHECK(manifest["outputs"].contains("model.ckpt"));
    CHECK(manifest["inputs"].contains(spec_path));
    CHECK(res.test_report.per_label_lower.size() == 25);
}

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "chmc/baseline.hpp"
#include "chmc/checkpoint.hpp"
#include "chmc/config.hpp"
#include "chmc/errors.hpp"
#include "chmc/evaluation.hpp"
#include "chmc/hash.hpp"
#include "chmc/log.hpp"
#include "chmc/masking.hpp"
#include "chmc/pipeline.hpp"
#include "chmc/synthetic.hpp"
#include "chmc/trainer.hpp"

namespace fs = std::filesystem;
using namespace chmc;

namespace {

std::string config_key_help() {
    std::string out = "Config keys (INI sections, overridable with --set section.key=value):\n";
    for (const auto& k : config_registry()) {
        out += "  " + k.section + "." + k.key + " (default: " +
               (k.default_value.empty() ? "<empty>" : k.default_value) + ") " + k.description +
               "\n";
    }
    return out;
}

struct GlobalArgs {
    std::string config_path;
    std::string out_dir;
    uint64_t seed = 13;
    size_t threads = 1;
    std::vector<std::string> overrides;
};

Config resolve_config(const GlobalArgs& args) {
    Config cfg = args.config_path.empty() ? Config() : Config::load(args.config_path);
    for (const auto& s : args.overrides) cfg.set_override(s);
    return cfg;
}

int cmd_synth(const std::string& spec_path, const GlobalArgs& args) {
    fs::create_directories(args.out_dir);
    LabelOntology ontology = LabelOntology::load(resolve_config(args).get("data", "ontology"));
    SyntheticSpec spec = SyntheticSpec::load(spec_path);
    SyntheticResult res = generate_synthetic(spec, ontology);
    std::vector<std::string> written;
    save_corpus(res.corpus, (fs::path(args.out_dir) / "corpus.jsonl").string());
    written.push_back("corpus.jsonl");
    nlohmann::ordered_json sj;
    sj["train_event_ids"] = res.split.train_event_ids;
    sj["test_event_ids"] = res.split.test_event_ids;
    std::ofstream sout(fs::path(args.out_dir) / "split.json");
    sout << sj.dump(2) << "\n";
    sout.close();
    written.push_back("split.json");
    const auto gaz_dir = fs::path(args.out_dir) / "gazetteers";
    fs::create_directories(gaz_dir);
    for (size_t i = 0; i < kNumEntityTypes; ++i) {
        const auto type = static_cast<EntityType>(i);
        const auto& entries = res.gazetteer.entries(type);
        if (entries.empty()) continue;
        std::ofstream g(gaz_dir / (std::string(entity_type_name(type)) + ".txt"));
        for (const auto& e : entries) g << e << "\n";
        written.push_back("gazetteers/" + std::string(entity_type_name(type)) + ".txt");
    }
    auto manifest = build_manifest("synth", resolve_config(args), args.seed, args.threads,
                                   {spec_path}, args.out_dir, written);
    write_manifest(manifest, (fs::path(args.out_dir) / "manifest.json").string());
    std::cout << "synthetic corpus: " << res.corpus.size() << " tweets, "
              << res.split.train_event_ids.size() << " train events, "
              << res.split.test_event_ids.size() << " test events\n";
    return 0;
}

int cmd_annotate(const GlobalArgs& args) {
    Config cfg = resolve_config(args);
    fs::create_directories(args.out_dir);
    LoadedData data = load_pipeline_data(cfg, args.out_dir, args.seed, args.threads);
    Corpus all;
    for (const auto* part : {&data.fit, &data.dev, &data.test})
        all.insert(all.end(), part->begin(), part->end());
    save_corpus(all, (fs::path(args.out_dir) / "annotated.jsonl").string());
    auto manifest = build_manifest("annotate", cfg, args.seed, args.threads, data.input_paths,
                                   args.out_dir, {"annotated.jsonl"});
    write_manifest(manifest, (fs::path(args.out_dir) / "manifest.json").string());
    std::cout << "annotated " << all.size() << " tweets\n";
    return 0;
}

int cmd_ner_eval(const GlobalArgs& args) {
    Config cfg = resolve_config(args);
    fs::create_directories(args.out_dir);
    const std::string corpus_path = cfg.get("data", "corpus");
    if (corpus_path.empty()) throw ConfigError("ner-eval requires data.corpus with gold entities");
    LabelOntology ontology = LabelOntology::load(cfg.get("data", "ontology"));
    Corpus corpus = load_corpus(corpus_path, ontology);
    Gazetteer gaz;
    const std::string gaz_dir = cfg.get("ner", "gazetteer_dir");
    if (!gaz_dir.empty()) gaz = Gazetteer::load_dir(gaz_dir);
    std::vector<std::vector<EntitySpan>> gold, pred;
    for (const auto& t : corpus) {
        gold.push_back(t.entities);
        pred.push_back(annotate(t.text, gaz));
    }
    NerScore score = strict_ner_f1(gold, pred);
    nlohmann::ordered_json j;
    j["schema"] = "ner-eval-v1";
    j["documents"] = corpus.size();
    j["gold_spans"] = score.gold_count;
    j["predicted_spans"] = score.pred_count;
    j["true_positives"] = score.true_positives;
    j["precision"] = score.precision;
    j["recall"] = score.recall;
    j["strict_f1"] = score.f1;
    std::ofstream out(fs::path(args.out_dir) / "ner_eval.json");
    out << j.dump(2) << "\n";
    out.close();
    auto manifest = build_manifest("ner-eval", cfg, args.seed, args.threads,
                                   {corpus_path, cfg.get("data", "ontology")}, args.out_dir,
                                   {"ner_eval.json"});
    write_manifest(manifest, (fs::path(args.out_dir) / "manifest.json").string());
    std::cout << "strict NER F1 " << score.f1 << " (P " << score.precision << ", R "
              << score.recall << ")\n";
    return 0;
}

int cmd_vocab(const GlobalArgs& args) {
    Config cfg = resolve_config(args);
    fs::create_directories(args.out_dir);
    LoadedData data = load_pipeline_data(cfg, args.out_dir, args.seed, args.threads);
    Vocab vocab = Vocab::train(
        vocab_view_texts(data.fit, cfg.get_bool("tokenizer", "entity_tokens")),
        static_cast<size_t>(cfg.get_int("tokenizer", "vocab_size")),
        cfg.get_bool("tokenizer", "lowercase"));
    vocab.save((fs::path(args.out_dir) / "vocab.txt").string());
    std::vector<std::string> written = data.written;
    written.push_back("vocab.txt");
    auto manifest =
        build_manifest("vocab", cfg, args.seed, args.threads, data.input_paths, args.out_dir, written);
    write_manifest(manifest, (fs::path(args.out_dir) / "manifest.json").string());
    std::cout << "vocabulary size " << vocab.size() << "\n";
    return 0;
}

int cmd_evaluate(const GlobalArgs& args) {
    Config cfg = resolve_config(args);
    fs::create_directories(args.out_dir);
    const std::string vocab_path = (fs::path(args.out_dir) / "vocab.txt").string();
    const std::string model_path = (fs::path(args.out_dir) / "model.ckpt").string();
    if (!fs::exists(model_path))
        throw ValidationError("evaluate expects model.ckpt under --out (run finetune first)");
    LoadedData data = load_pipeline_data(cfg, args.out_dir, args.seed, args.threads);
    Vocab vocab = Vocab::load(vocab_path);
    Checkpoint ckpt = load_checkpoint(model_path, &data.ontology);
    if (!ckpt.head.has_value()) throw ValidationError("model.ckpt carries no classification head");
    const bool entity_tokens = cfg.get_bool("tokenizer", "entity_tokens");
    const size_t max_len = static_cast<size_t>(cfg.get_int("tokenizer", "max_len"));
    const bool skip_zero = cfg.get_bool("eval", "skip_zero_support");
    auto seqs = encode_corpus(data.test, vocab, max_len, entity_tokens);
    auto preds = predict_corpus(ckpt.encoder, *ckpt.head, seqs, data.ontology,
                                cfg.get_double("finetune", "threshold"),
                                static_cast<size_t>(cfg.get_int("finetune", "batch_size")),
                                args.threads);
    EvalReport report = evaluate_predictions(prediction_names_upper(preds, data.ontology),
                                             prediction_names_lower(preds, data.ontology),
                                             data.test, data.ontology, skip_zero);
    report.config_echo = cfg.to_json();
    write_report_json(report, (fs::path(args.out_dir) / "report_test.json").string());
    write_report_csv(report, (fs::path(args.out_dir) / "report_test.csv").string());
    write_report_svg(report, (fs::path(args.out_dir) / "figure_test.svg").string());
    auto manifest = build_manifest("evaluate", cfg, args.seed, args.threads, data.input_paths,
                                   args.out_dir,
                                   {"report_test.json", "report_test.csv", "figure_test.svg"});
    write_manifest(manifest, (fs::path(args.out_dir) / "manifest.json").string());
    std::cout << "test lower macro F1 " << report.macro_f1_lower << ", upper "
              << report.macro_f1_upper << ", AIT " << report.macro_f1_ait << "\n";
    return 0;
}

int cmd_baseline(const GlobalArgs& args) {
    Config cfg = resolve_config(args);
    fs::create_directories(args.out_dir);
    LoadedData data = load_pipeline_data(cfg, args.out_dir, args.seed, args.threads);
    const auto& ontology = data.ontology;

    std::vector<std::string> fit_texts, dev_texts, test_texts;
    for (const auto& t : data.fit) fit_texts.push_back(t.text);
    for (const auto& t : data.dev) dev_texts.push_back(t.text);
    for (const auto& t : data.test) test_texts.push_back(t.text);

    auto indicators = [&](const Corpus& part) {
        std::vector<std::vector<uint8_t>> per_label(ontology.n_lower());
        for (size_t l = 0; l < ontology.n_lower(); ++l) {
            per_label[l].resize(part.size(), 0);
            for (size_t i = 0; i < part.size(); ++i)
                per_label[l][i] = part[i].lower_labels.count(ontology.lower_labels()[l]) ? 1 : 0;
        }
        return per_label;
    };
    auto fit_y = indicators(data.fit);

    struct Candidate {
        TfidfConfig tfidf;
        double l2;
    };
    std::vector<Candidate> grid;
    if (cfg.get_bool("baseline", "grid_search")) {
        for (size_t nmax : {1UL, 2UL})
            for (size_t feats : {2000UL, 5000UL})
                for (double l2 : {0.01, 0.1, 1.0})
                    grid.push_back({{1, nmax, feats}, l2});
    } else {
        grid.push_back({{static_cast<size_t>(cfg.get_int("baseline", "ngram_min")),
                         static_cast<size_t>(cfg.get_int("baseline", "ngram_max")),
                         static_cast<size_t>(cfg.get_int("baseline", "max_features"))},
                        cfg.get_double("baseline", "l2")});
    }

    const double threshold = cfg.get_double("finetune", "threshold");
    const bool skip_zero = cfg.get_bool("eval", "skip_zero_support");
    double best_dev = -1.0;
    TfidfSpace best_space;
    OvrLogReg best_model;
    Candidate best_cand = grid.front();
    for (const auto& cand : grid) {
        TfidfSpace space = TfidfSpace::fit(fit_texts, cand.tfidf);
        std::vector<SparseDoc> fit_docs;
        for (const auto& t : fit_texts) fit_docs.push_back(space.transform(t));
        LogRegOptions opts;
        opts.l2 = cand.l2;
        opts.seed = args.seed;
        opts.threads = args.threads;
        OvrLogReg model = train_ovr_logreg(fit_docs, ontology.lower_labels(), fit_y, opts);
        std::vector<std::set<std::string>> dev_pred;
        for (const auto& t : dev_texts)
            dev_pred.push_back(predict_baseline(model, space.transform(t), threshold, ontology).lower);
        std::vector<std::set<std::string>> dev_gold;
        for (const auto& t : data.dev) dev_gold.push_back(t.lower_labels);
        const double f1 = macro_f1(dev_pred, dev_gold, ontology.lower_labels(), skip_zero).macro_f1;
        log::info("baseline candidate ngram<=" + std::to_string(cand.tfidf.ngram_max) +
                  " feats=" + std::to_string(cand.tfidf.max_features) +
                  " l2=" + std::to_string(cand.l2) + " dev F1 " + std::to_string(f1));
        if (f1 > best_dev) {
            best_dev = f1;
            best_space = std::move(space);
            best_model = std::move(model);
            best_cand = cand;
        }
    }

    std::vector<std::set<std::string>> test_upper, test_lower;
    for (const auto& t : test_texts) {
        auto p = predict_baseline(best_model, best_space.transform(t), threshold, ontology);
        test_upper.push_back(std::move(p.upper));
        test_lower.push_back(std::move(p.lower));
    }
    EvalReport report =
        evaluate_predictions(test_upper, test_lower, data.test, ontology, skip_zero);
    report.config_echo = cfg.to_json();
    best_space.save((fs::path(args.out_dir) / "tfidf.json").string());
    best_model.save((fs::path(args.out_dir) / "logreg.json").string(),
                    (fs::path(args.out_dir) / "logreg.bin").string());
    write_report_json(report, (fs::path(args.out_dir) / "baseline_report.json").string());
    write_report_csv(report, (fs::path(args.out_dir) / "baseline_report.csv").string());
    auto manifest = build_manifest("baseline", cfg, args.seed, args.threads, data.input_paths,
                                   args.out_dir,
                                   {"tfidf.json", "logreg.json", "logreg.bin",
                                    "baseline_report.json", "baseline_report.csv"});
    write_manifest(manifest, (fs::path(args.out_dir) / "manifest.json").string());
    std::cout << "baseline (ngram<=" << best_cand.tfidf.ngram_max
              << ", feats=" << best_cand.tfidf.max_features << ", l2=" << best_cand.l2
              << "): dev F1 " << best_dev << ", test lower macro F1 " << report.macro_f1_lower
              << ", upper " << report.macro_f1_upper << ", AIT " << report.macro_f1_ait << "\n";
    return 0;
}

int cmd_ablate(const GlobalArgs& args) {
    Config cfg = resolve_config(args);
    auto table = ablation_suite(cfg, args.out_dir, args.seed, args.threads);
    for (const auto& r : table)
        std::cout << r.name << " L_T " << r.macro_f1_upper << " L_B " << r.macro_f1_lower
                  << " AIT " << r.macro_f1_ait << "\n";
    return 0;
}

int cmd_run(const GlobalArgs& args, const std::string& command, PipelineStage stage) {
    Config cfg = resolve_config(args);
    PipelineResult res = run_pipeline(cfg, args.out_dir, args.seed, args.threads, command, stage);
    if (stage == PipelineStage::Full)
        std::cout << "dev lower macro F1 " << res.dev_report.macro_f1_lower
                  << ", test lower macro F1 " << res.test_report.macro_f1_lower << ", test AIT "
                  << res.test_report.macro_f1_ait << "\n";
    else
        std::cout << "stage complete; manifest at " << res.manifest_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"crisis_hmc: entity-masked adaptive pre-training and hierarchical multi-label "
                 "classification for crisis tweets"};
    app.footer(config_key_help());
    app.require_subcommand(1);

    GlobalArgs args;
    app.add_option("--config", args.config_path, "INI config file");
    app.add_option("--out", args.out_dir, "output directory")->required();
    app.add_option("--seed", args.seed, "global random seed (default 13)");
    app.add_option("--threads", args.threads,
                   "worker thread cap; 1 guarantees bit-reproducible outputs");
    app.add_option("--set", args.overrides, "config override section.key=value (repeatable)");

    std::string spec_path;
    auto* synth = app.add_subcommand("synth", "generate a synthetic crisis corpus");
    synth->add_option("--spec", spec_path, "synthetic corpus spec JSON")->required();
    auto* annotate_cmd = app.add_subcommand("annotate", "run entity annotation over the corpus");
    auto* ner_eval = app.add_subcommand("ner-eval", "strict F1 of the local annotator vs gold");
    auto* vocab_cmd = app.add_subcommand("vocab", "train the subword vocabulary");
    auto* pretrain_cmd = app.add_subcommand("pretrain", "run adaptive MLM pre-training");
    auto* finetune_cmd = app.add_subcommand("finetune", "fine-tune a classification head");
    auto* evaluate_cmd = app.add_subcommand("evaluate", "evaluate model.ckpt on the test events");
    auto* ablate_cmd = app.add_subcommand("ablate", "run the 6-configuration ablation suite");
    auto* baseline_cmd = app.add_subcommand("baseline", "TF-IDF + logistic regression baseline");
    auto* run_cmd = app.add_subcommand("run", "full pipeline: data, vocab, pretrain, finetune, eval");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);  // prints usage; non-zero for errors
    }

    try {
        if (synth->parsed()) return cmd_synth(spec_path, args);
        if (annotate_cmd->parsed()) return cmd_annotate(args);
        if (ner_eval->parsed()) return cmd_ner_eval(args);
        if (vocab_cmd->parsed()) return cmd_vocab(args);
        if (pretrain_cmd->parsed()) return cmd_run(args, "pretrain", PipelineStage::Pretrain);
        if (finetune_cmd->parsed()) return cmd_run(args, "finetune", PipelineStage::Finetune);
        if (evaluate_cmd->parsed()) return cmd_evaluate(args);
        if (ablate_cmd->parsed()) return cmd_ablate(args);
        if (baseline_cmd->parsed()) return cmd_baseline(args);
        if (run_cmd->parsed()) return cmd_run(args, "run", PipelineStage::Full);
        std::cerr << "no command given\n";
        return 1;
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 1;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

#include "chmc/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <thread>

#include "chmc/checkpoint.hpp"
#include "chmc/errors.hpp"
#include "chmc/hash.hpp"
#include "chmc/log.hpp"
#include "chmc/masking.hpp"
#include "chmc/ner_remote.hpp"
#include "chmc/trainer.hpp"
#include "chmc/utf8.hpp"

namespace fs = std::filesystem;

namespace chmc {

namespace {

void annotate_corpus(Corpus& corpus, const std::string& mode, const Gazetteer& gaz,
                     const RemoteNerConfig& remote, size_t threads) {
    if (mode == "gold") return;
    if (mode == "none") {
        for (auto& t : corpus) t.entities.clear();
        return;
    }
    if (mode == "local") {
        std::atomic<size_t> next{0};
        auto work = [&] {
            for (size_t i = next.fetch_add(1); i < corpus.size(); i = next.fetch_add(1))
                corpus[i].entities = annotate(corpus[i].text, gaz);
        };
        if (threads <= 1) {
            work();
        } else {
            std::vector<std::thread> pool;
            for (size_t t = 0; t < threads; ++t) pool.emplace_back(work);
            for (auto& th : pool) th.join();
        }
        return;
    }
    if (mode == "remote") {
        std::vector<std::string> texts;
        texts.reserve(corpus.size());
        for (const auto& t : corpus) texts.push_back(t.text);
        auto spans = fetch_remote_annotations(texts, remote, gaz);
        for (size_t i = 0; i < corpus.size(); ++i) corpus[i].entities = std::move(spans[i]);
        return;
    }
    throw ConfigError("unknown ner.mode: " + mode);
}

TrainConfig train_config_from(const Config& cfg, const std::string& section, uint64_t seed) {
    TrainConfig tc;
    tc.learning_rate = cfg.get_double(section, "learning_rate");
    tc.batch_size = static_cast<size_t>(cfg.get_int(section, "batch_size"));
    tc.eval_interval = static_cast<size_t>(cfg.get_int(section, "eval_interval"));
    tc.seed = seed;
    if (section == "finetune") {
        tc.lambda = cfg.get_double("finetune", "lambda");
        tc.finetune_epochs = static_cast<size_t>(cfg.get_int("finetune", "epochs"));
        tc.threshold = cfg.get_double("finetune", "threshold");
        tc.freeze_encoder = cfg.get_bool("finetune", "freeze_encoder");
        tc.weight_decay = cfg.get_double("finetune", "weight_decay");
    } else {
        tc.pretrain_epochs = static_cast<size_t>(cfg.get_int("pretrain", "epochs"));
    }
    return tc;
}

FinetuneData finetune_data(const Corpus& corpus, const std::vector<TokenSequence>& seqs,
                           const LabelOntology& ontology) {
    FinetuneData d;
    d.seqs = seqs;
    for (const auto& t : corpus) {
        d.upper.push_back(upper_indicators(t.upper_labels, ontology));
        d.lower.push_back(lower_indicators(t.lower_labels, ontology));
        d.lower_names.push_back(t.lower_labels);
    }
    return d;
}

}  // namespace

std::vector<std::string> vocab_view_texts(const Corpus& corpus, bool entity_tokens) {
    std::vector<std::string> texts;
    texts.reserve(corpus.size());
    for (const auto& t : corpus) {
        if (!entity_tokens || t.entities.empty()) {
            texts.push_back(t.text);
            continue;
        }
        // entity surfaces never reach the subword trainer; they are opaque
        // tokens at encode time
        auto cps = utf8::decode(t.text);
        std::vector<EntitySpan> spans = t.entities;
        std::sort(spans.begin(), spans.end(),
                  [](const EntitySpan& a, const EntitySpan& b) { return a.start < b.start; });
        std::string out;
        size_t pos = 0;
        for (const auto& s : spans) {
            out += utf8::encode(cps, pos, s.start);
            out += ' ';
            pos = s.end;
        }
        out += utf8::encode(cps, pos, cps.size());
        texts.push_back(std::move(out));
    }
    return texts;
}

std::vector<TokenSequence> encode_corpus(const Corpus& corpus, const Vocab& vocab, size_t max_len,
                                         bool entity_tokens) {
    std::vector<TokenSequence> seqs;
    seqs.reserve(corpus.size());
    for (const auto& t : corpus)
        seqs.push_back(encode(t.text, entity_tokens ? t.entities : std::vector<EntitySpan>{},
                              vocab, max_len));
    return seqs;
}

LoadedData load_pipeline_data(const Config& cfg, const std::string& out_dir, uint64_t seed,
                              size_t threads) {
    const std::string ontology_path = cfg.get("data", "ontology");
    LoadedData data{LabelOntology::load(ontology_path), {}, {}, {}, {}, {}, {}};
    data.input_paths.push_back(ontology_path);

    Corpus corpus;
    DatasetSplit split;
    const std::string synth_spec_path = cfg.get("data", "synth_spec");
    if (!synth_spec_path.empty()) {
        SyntheticSpec spec = SyntheticSpec::load(synth_spec_path);
        data.input_paths.push_back(synth_spec_path);
        SyntheticResult synth = generate_synthetic(spec, data.ontology);
        corpus = std::move(synth.corpus);
        split = std::move(synth.split);
        data.gazetteer = std::move(synth.gazetteer);
        save_corpus(corpus, (fs::path(out_dir) / "corpus.jsonl").string());
        data.written.push_back("corpus.jsonl");
        nlohmann::ordered_json sj;
        sj["train_event_ids"] = split.train_event_ids;
        sj["test_event_ids"] = split.test_event_ids;
        std::ofstream sout(fs::path(out_dir) / "split.json");
        sout << sj.dump(2) << "\n";
        data.written.push_back("split.json");
    } else {
        const std::string corpus_path = cfg.get("data", "corpus");
        if (corpus_path.empty())
            throw ConfigError("either data.corpus or data.synth_spec must be set");
        corpus = load_corpus(corpus_path, data.ontology);
        data.input_paths.push_back(corpus_path);
        const std::string split_path = cfg.get("data", "split");
        if (split_path.empty()) throw ConfigError("data.split is required with data.corpus");
        std::ifstream sin(split_path);
        if (!sin) throw IoError("cannot open split file: " + split_path);
        nlohmann::json sj;
        sin >> sj;
        for (const auto& e : sj.at("train_event_ids")) split.train_event_ids.insert(e.get<std::string>());
        for (const auto& e : sj.at("test_event_ids")) split.test_event_ids.insert(e.get<std::string>());
        data.input_paths.push_back(split_path);
        const std::string gaz_dir = cfg.get("ner", "gazetteer_dir");
        if (!gaz_dir.empty()) data.gazetteer = Gazetteer::load_dir(gaz_dir);
    }

    RemoteNerConfig remote;
    remote.host = cfg.get("ner", "remote_host");
    remote.port = static_cast<int>(cfg.get_int("ner", "remote_port"));
    remote.path = cfg.get("ner", "remote_path");
    remote.max_retries = static_cast<int>(cfg.get_int("ner", "remote_retries"));
    annotate_corpus(corpus, cfg.get("ner", "mode"), data.gazetteer, remote, threads);

    auto [train_all, test] = split_by_event(corpus, split);
    const double dev_ratio = cfg.get_double("data", "dev_ratio");
    auto [fit, dev] = stratified_dev_split(train_all, 1.0 - dev_ratio, seed, data.ontology);
    data.fit = std::move(fit);
    data.dev = std::move(dev);
    data.test = std::move(test);
    log::info("data: fit " + std::to_string(data.fit.size()) + ", dev " +
              std::to_string(data.dev.size()) + ", test " + std::to_string(data.test.size()));
    return data;
}

nlohmann::ordered_json build_manifest(const std::string& command, const Config& cfg,
                                      uint64_t seed, size_t threads,
                                      const std::vector<std::string>& input_paths,
                                      const std::string& out_dir,
                                      const std::vector<std::string>& output_names) {
    nlohmann::ordered_json m;
    m["schema"] = "manifest-v1";
    m["version"] = kVersion;
    m["command"] = command;
    m["seed"] = seed;
    m["threads"] = threads;
    m["config_hash"] = cfg.hash();
    m["config"] = cfg.to_json();
    nlohmann::ordered_json inputs = nlohmann::ordered_json::object();
    std::vector<std::string> sorted_inputs = input_paths;
    std::sort(sorted_inputs.begin(), sorted_inputs.end());
    sorted_inputs.erase(std::unique(sorted_inputs.begin(), sorted_inputs.end()),
                        sorted_inputs.end());
    for (const auto& p : sorted_inputs)
        if (!p.empty() && fs::exists(p)) inputs[p] = digest_file(p);
    m["inputs"] = inputs;
    nlohmann::ordered_json outputs = nlohmann::ordered_json::object();
    std::vector<std::string> sorted_outputs = output_names;
    std::sort(sorted_outputs.begin(), sorted_outputs.end());
    for (const auto& name : sorted_outputs) {
        const auto p = fs::path(out_dir) / name;
        if (fs::exists(p)) outputs[name] = digest_file(p.string());
    }
    m["outputs"] = outputs;
    return m;
}

void write_manifest(const nlohmann::ordered_json& manifest, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write manifest: " + path);
    out << manifest.dump(2) << "\n";
}

PipelineResult run_pipeline(const Config& cfg, const std::string& out_dir, uint64_t seed,
                            size_t threads, const std::string& command, PipelineStage stage) {
    fs::create_directories(out_dir);
    std::vector<std::string> written;

    LoadedData data = load_pipeline_data(cfg, out_dir, seed, threads);
    written.insert(written.end(), data.written.begin(), data.written.end());

    const bool entity_tokens = cfg.get_bool("tokenizer", "entity_tokens");
    const size_t max_len = static_cast<size_t>(cfg.get_int("tokenizer", "max_len"));
    const bool lowercase = cfg.get_bool("tokenizer", "lowercase");

    log::info("training vocabulary");
    Vocab vocab = Vocab::train(vocab_view_texts(data.fit, entity_tokens),
                               static_cast<size_t>(cfg.get_int("tokenizer", "vocab_size")),
                               lowercase);
    vocab.save((fs::path(out_dir) / "vocab.txt").string());
    written.push_back("vocab.txt");

    auto fit_seqs = encode_corpus(data.fit, vocab, max_len, entity_tokens);
    auto dev_seqs = encode_corpus(data.dev, vocab, max_len, entity_tokens);
    auto test_seqs = encode_corpus(data.test, vocab, max_len, entity_tokens);

    EncoderConfig enc_cfg;
    enc_cfg.n_layers = static_cast<int>(cfg.get_int("pretrain", "n_layers"));
    enc_cfg.n_heads = static_cast<int>(cfg.get_int("pretrain", "n_heads"));
    enc_cfg.d_model = static_cast<int>(cfg.get_int("pretrain", "d_model"));
    enc_cfg.d_ff = static_cast<int>(cfg.get_int("pretrain", "d_ff"));
    enc_cfg.max_len = static_cast<int>(max_len);
    enc_cfg.vocab_size = static_cast<int>(vocab.size());
    enc_cfg.dropout = cfg.get_double("pretrain", "dropout");

    EncoderParams<float> encoder_params = EncoderParams<float>::init(enc_cfg, seed);
    if (cfg.get_bool("pretrain", "enabled")) {
        log::info("adaptive MLM pre-training");
        MaskingConfig mask_cfg;
        mask_cfg.alpha = cfg.get_double("pretrain", "alpha");
        mask_cfg.beta = cfg.get_double("pretrain", "beta");
        TrainConfig tc = train_config_from(cfg, "pretrain", seed);
        PretrainResult pre = pretrain_from(std::move(encoder_params), fit_seqs, dev_seqs,
                                           mask_cfg, tc);
        encoder_params = std::move(pre.params);
        write_trace_csv(pre.trace, "dev_mlm_loss",
                        (fs::path(out_dir) / "pretrain_trace.csv").string());
        written.push_back("pretrain_trace.csv");
        Checkpoint ck{encoder_params, std::nullopt, cfg.to_json(), pre.best_step, "dev_mlm_loss",
                      pre.best_dev_loss};
        save_checkpoint(ck, (fs::path(out_dir) / "pretrain.ckpt").string());
        written.push_back("pretrain.ckpt");
    }

    PipelineResult res;
    res.config_hash = cfg.hash();
    if (stage == PipelineStage::Pretrain) {
        auto manifest =
            build_manifest(command, cfg, seed, threads, data.input_paths, out_dir, written);
        res.manifest_path = (fs::path(out_dir) / "manifest.json").string();
        write_manifest(manifest, res.manifest_path);
        return res;
    }

    log::info("fine-tuning");
    const HeadKind kind = head_kind_from_name(cfg.get("finetune", "head"));
    TrainConfig ft = train_config_from(cfg, "finetune", seed);
    FinetuneResult fin = finetune(encoder_params, kind, finetune_data(data.fit, fit_seqs, data.ontology),
                                  finetune_data(data.dev, dev_seqs, data.ontology), data.ontology,
                                  ft);
    write_trace_csv(fin.trace, "dev_lower_macro_f1",
                    (fs::path(out_dir) / "finetune_trace.csv").string());
    written.push_back("finetune_trace.csv");
    Checkpoint model{fin.encoder, fin.head, cfg.to_json(), fin.best_step, "dev_lower_macro_f1",
                     fin.best_dev_f1};
    save_checkpoint(model, (fs::path(out_dir) / "model.ckpt").string());
    written.push_back("model.ckpt");

    if (stage == PipelineStage::Finetune) {
        auto manifest =
            build_manifest(command, cfg, seed, threads, data.input_paths, out_dir, written);
        res.manifest_path = (fs::path(out_dir) / "manifest.json").string();
        write_manifest(manifest, res.manifest_path);
        return res;
    }

    const bool skip_zero = cfg.get_bool("eval", "skip_zero_support");
    auto eval_part = [&](const Corpus& part, const std::vector<TokenSequence>& seqs) {
        auto preds = predict_corpus(fin.encoder, fin.head, seqs, data.ontology, ft.threshold,
                                    ft.batch_size, threads);
        return evaluate_predictions(prediction_names_upper(preds, data.ontology),
                                    prediction_names_lower(preds, data.ontology), part,
                                    data.ontology, skip_zero);
    };
    log::info("evaluating");
    res.dev_report = eval_part(data.dev, dev_seqs);
    res.test_report = eval_part(data.test, test_seqs);
    res.dev_report.config_echo = cfg.to_json();
    res.test_report.config_echo = cfg.to_json();

    write_report_json(res.dev_report, (fs::path(out_dir) / "report_dev.json").string());
    write_report_csv(res.dev_report, (fs::path(out_dir) / "report_dev.csv").string());
    write_report_json(res.test_report, (fs::path(out_dir) / "report_test.json").string());
    write_report_csv(res.test_report, (fs::path(out_dir) / "report_test.csv").string());
    write_report_svg(res.test_report, (fs::path(out_dir) / "figure_test.svg").string());
    written.insert(written.end(), {"report_dev.json", "report_dev.csv", "report_test.json",
                                   "report_test.csv", "figure_test.svg"});

    auto manifest = build_manifest(command, cfg, seed, threads, data.input_paths, out_dir, written);
    res.manifest_path = (fs::path(out_dir) / "manifest.json").string();
    write_manifest(manifest, res.manifest_path);
    return res;
}

const std::vector<AblationRowSpec>& ablation_rows() {
    static const std::vector<AblationRowSpec> rows = {
        {"hmcn_local", true, false, true, "hmcn_local"},
        {"-hierarchy", true, false, true, "lcl"},
        {"-multi_task", true, false, true, "single_task"},
        {"-mlm", false, false, true, "single_task"},
        {"-entities", false, false, false, "single_task"},
        {"mlm_plain", true, true, false, "single_task"},
    };
    return rows;
}

Config ablation_row_config(const Config& base, const AblationRowSpec& row) {
    Config cfg = base;
    cfg.set("pretrain", "enabled", row.pretrain ? "true" : "false");
    if (row.standard_masking) {
        cfg.set("pretrain", "alpha", "0.15");
        cfg.set("pretrain", "beta", "0.15");
    }
    cfg.set("tokenizer", "entity_tokens", row.entity_tokens ? "true" : "false");
    cfg.set("finetune", "head", row.head);
    return cfg;
}

std::vector<AblationRow> ablation_suite(const Config& base, const std::string& out_dir,
                                        uint64_t seed, size_t threads) {
    fs::create_directories(out_dir);
    std::vector<AblationRow> table;
    std::vector<std::string> written;
    for (const auto& spec : ablation_rows()) {
        std::string dir_name = spec.name;
        for (auto& c : dir_name)
            if (c == '-') c = 'x';  // keep directory names shell-friendly
        const std::string row_dir = (fs::path(out_dir) / ("row_" + dir_name)).string();
        log::info("ablation row: " + spec.name);
        Config row_cfg = ablation_row_config(base, spec);
        PipelineResult res = run_pipeline(row_cfg, row_dir, seed, threads, "ablate:" + spec.name);
        AblationRow row;
        row.name = spec.name;
        row.config_hash = res.config_hash;
        row.macro_f1_upper = res.test_report.macro_f1_upper;
        row.macro_f1_lower = res.test_report.macro_f1_lower;
        row.macro_f1_ait = res.test_report.macro_f1_ait;
        table.push_back(row);
    }

    std::ofstream csv(fs::path(out_dir) / "ablation.csv");
    csv << "configuration,config_hash,macro_f1_upper,macro_f1_lower,macro_f1_ait\n";
    char buf[256];
    for (const auto& r : table) {
        std::snprintf(buf, sizeof(buf), "%s,%s,%.6f,%.6f,%.6f\n", r.name.c_str(),
                      r.config_hash.c_str(), r.macro_f1_upper, r.macro_f1_lower, r.macro_f1_ait);
        csv << buf;
    }
    csv.close();
    written.push_back("ablation.csv");

    nlohmann::ordered_json j = nlohmann::ordered_json::array();
    for (const auto& r : table)
        j.push_back({{"configuration", r.name},
                     {"config_hash", r.config_hash},
                     {"macro_f1_upper", r.macro_f1_upper},
                     {"macro_f1_lower", r.macro_f1_lower},
                     {"macro_f1_ait", r.macro_f1_ait}});
    std::ofstream js(fs::path(out_dir) / "ablation.json");
    js << j.dump(2) << "\n";
    js.close();
    written.push_back("ablation.json");

    // grouped bars: three metrics per configuration
    std::ofstream svg(fs::path(out_dir) / "ablation.svg");
    const double width = 900, height = 320, x0 = 50, y0 = 40, axis_h = 220;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" font-family=\"sans-serif\">\n";
    svg << "<text x=\"50\" y=\"24\" font-size=\"13\">ablation study: upper / lower / actionable "
           "macro F1</text>\n";
    const double slot = (width - 2 * x0) / static_cast<double>(table.size());
    const char* colors[3] = {"#4878a8", "#e0a030", "#58a868"};
    for (size_t i = 0; i < table.size(); ++i) {
        const double vals[3] = {table[i].macro_f1_upper, table[i].macro_f1_lower,
                                table[i].macro_f1_ait};
        for (int k = 0; k < 3; ++k) {
            const double bw = slot / 4.0;
            const double bx = x0 + slot * static_cast<double>(i) + bw * (0.5 + k);
            const double bh = axis_h * std::clamp(vals[k], 0.0, 1.0);
            svg << "<rect x=\"" << bx << "\" y=\"" << (y0 + axis_h - bh) << "\" width=\""
                << bw * 0.9 << "\" height=\"" << bh << "\" fill=\"" << colors[k] << "\"/>\n";
        }
        svg << "<text x=\"" << (x0 + slot * (static_cast<double>(i) + 0.5)) << "\" y=\""
            << (y0 + axis_h + 16) << "\" font-size=\"10\" text-anchor=\"middle\">" << table[i].name
            << "</text>\n";
    }
    svg << "<line x1=\"" << x0 << "\" y1=\"" << (y0 + axis_h) << "\" x2=\"" << (width - x0)
        << "\" y2=\"" << (y0 + axis_h) << "\" stroke=\"black\"/>\n</svg>\n";
    svg.close();
    written.push_back("ablation.svg");

    auto manifest = build_manifest("ablate", base, seed, threads, {}, out_dir, written);
    write_manifest(manifest, (fs::path(out_dir) / "manifest.json").string());
    return table;
}

}  // namespace chmc

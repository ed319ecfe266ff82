#include "chmc/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "chmc/errors.hpp"
#include "chmc/rng.hpp"
#include "chmc/utf8.hpp"

namespace chmc {

std::set<std::string> derive_upper_labels(const std::set<std::string>& lower,
                                          const LabelOntology& ontology) {
    return ontology.derive_upper(lower);
}

namespace {

AnnotatedTweet tweet_from_json(const nlohmann::json& j, const LabelOntology& ontology, long line) {
    AnnotatedTweet t;
    try {
        t.id = j.at("id").get<std::string>();
        t.event_id = j.at("event_id").get<std::string>();
        t.event_type = j.at("event_type").get<std::string>();
        t.text = j.at("text").get<std::string>();
        for (const auto& l : j.at("lower_labels")) t.lower_labels.insert(l.get<std::string>());
        if (j.contains("entities")) {
            for (const auto& e : j["entities"]) {
                EntitySpan s;
                s.start = e.at("start").get<size_t>();
                s.end = e.at("end").get<size_t>();
                s.type = entity_type_from_name(e.at("type").get<std::string>());
                s.surface = e.at("text").get<std::string>();
                t.entities.push_back(s);
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("corpus record: ") + e.what(), line);
    }
    for (const auto& l : t.lower_labels)
        if (!ontology.has_lower(l)) throw ValidationError("unknown lower label: " + l);
    validate_spans(t.text, t.entities);
    t.upper_labels = ontology.derive_upper(t.lower_labels);
    return t;
}

}  // namespace

Corpus parse_corpus_jsonl(const std::string& text, const LabelOntology& ontology) {
    Corpus corpus;
    std::istringstream in(text);
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("malformed JSON: ") + e.what(), lineno);
        }
        corpus.push_back(tweet_from_json(j, ontology, lineno));
    }
    return corpus;
}

Corpus load_corpus(const std::string& path, const LabelOntology& ontology) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open corpus file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_corpus_jsonl(ss.str(), ontology);
}

std::string corpus_to_jsonl(const Corpus& corpus) {
    std::string out;
    for (const auto& t : corpus) {
        nlohmann::ordered_json j;
        j["id"] = t.id;
        j["event_id"] = t.event_id;
        j["event_type"] = t.event_type;
        j["text"] = t.text;
        j["lower_labels"] = std::vector<std::string>(t.lower_labels.begin(), t.lower_labels.end());
        nlohmann::ordered_json ents = nlohmann::ordered_json::array();
        for (const auto& e : t.entities) {
            nlohmann::ordered_json je;
            je["start"] = e.start;
            je["end"] = e.end;
            je["type"] = entity_type_name(e.type);
            je["text"] = e.surface;
            ents.push_back(je);
        }
        j["entities"] = ents;
        out += j.dump();
        out += '\n';
    }
    return out;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write corpus file: " + path);
    out << corpus_to_jsonl(corpus);
}

std::pair<Corpus, Corpus> split_by_event(const Corpus& corpus, const DatasetSplit& split) {
    Corpus train, test;
    for (const auto& t : corpus) {
        bool in_train = split.train_event_ids.count(t.event_id) > 0;
        bool in_test = split.test_event_ids.count(t.event_id) > 0;
        if (in_train && in_test)
            throw ValidationError("event id in both split sides: " + t.event_id);
        if (!in_train && !in_test)
            throw ValidationError("event id in neither split side: " + t.event_id);
        (in_train ? train : test).push_back(t);
    }
    return {std::move(train), std::move(test)};
}

std::pair<Corpus, Corpus> stratified_dev_split(const Corpus& train, double ratio, uint64_t seed,
                                               const LabelOntology& ontology) {
    if (!(ratio > 0.0 && ratio < 1.0)) throw ValidationError("split ratio must be in (0,1)");
    if (train.size() < 2) throw ValidationError("corpus too small to split");

    const size_t n = train.size();
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(mix_seed(seed, "stratified_dev_split"));
    for (size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);

    const size_t n_labels = ontology.n_lower();
    std::vector<size_t> label_count(n_labels, 0);
    for (const auto& t : train)
        for (const auto& l : t.lower_labels) ++label_count[ontology.lower_index(l)];

    // Hard caps keep the totals within rounding of the requested ratio.
    const size_t dev_cap = static_cast<size_t>(std::llround((1.0 - ratio) * static_cast<double>(n)));
    const size_t fit_cap = n - dev_cap;

    // -1 unassigned, 0 fit, 1 dev
    std::vector<int> side(n, -1);
    std::vector<size_t> dev_label(n_labels, 0);
    size_t dev_total = 0, fit_total = 0;

    auto assign = [&](size_t doc, int s) {
        side[doc] = s;
        if (s == 1) {
            ++dev_total;
            for (const auto& l : train[doc].lower_labels) ++dev_label[ontology.lower_index(l)];
        } else {
            ++fit_total;
        }
    };

    // Rarest labels first so their dev share is met before caps bind.
    std::vector<size_t> label_order;
    for (size_t l = 0; l < n_labels; ++l)
        if (label_count[l] > 0) label_order.push_back(l);
    std::stable_sort(label_order.begin(), label_order.end(),
                     [&](size_t a, size_t b) { return label_count[a] < label_count[b]; });

    for (size_t l : label_order) {
        const double want_dev = (1.0 - ratio) * static_cast<double>(label_count[l]);
        for (size_t doc : order) {
            if (side[doc] != -1) continue;
            if (!train[doc].lower_labels.count(ontology.lower_labels()[l])) continue;
            bool to_dev = static_cast<double>(dev_label[l]) < want_dev && dev_total < dev_cap;
            if (fit_total >= fit_cap) to_dev = true;
            if (dev_total >= dev_cap) to_dev = false;
            assign(doc, to_dev ? 1 : 0);
        }
    }
    for (size_t doc : order) {
        if (side[doc] != -1) continue;
        assign(doc, dev_total < dev_cap ? 1 : 0);
    }

    Corpus fit, dev;
    for (size_t i = 0; i < n; ++i) (side[i] == 1 ? dev : fit).push_back(train[i]);
    return {std::move(fit), std::move(dev)};
}

}  // namespace chmc

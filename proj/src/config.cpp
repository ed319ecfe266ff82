#include "chmc/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "chmc/errors.hpp"
#include "chmc/hash.hpp"

namespace chmc {

const std::vector<ConfigKey>& config_registry() {
    static const std::vector<ConfigKey> keys = {
        {"data", "corpus", "", "path to a JSON Lines corpus (ignored when synth_spec is set)"},
        {"data", "ontology", "data/ontology.json", "path to the label ontology JSON"},
        {"data", "synth_spec", "", "path to a synthetic corpus spec; generates the corpus"},
        {"data", "split", "", "path to a split JSON with train_event_ids/test_event_ids"},
        {"data", "dev_ratio", "0.1", "held-out fraction of the train side for development"},

        {"ner", "mode", "gold", "entity source: gold | local | remote | none"},
        {"ner", "gazetteer_dir", "", "directory with <entity_type>.txt gazetteer files"},
        {"ner", "remote_host", "127.0.0.1", "remote annotator host"},
        {"ner", "remote_port", "0", "remote annotator port"},
        {"ner", "remote_path", "/annotate", "remote annotator URL path"},
        {"ner", "remote_retries", "3", "transport retries before giving up"},

        {"tokenizer", "vocab_size", "400", "subword vocabulary size including specials"},
        {"tokenizer", "max_len", "48", "token sequence length after padding"},
        {"tokenizer", "lowercase", "true", "lowercase text before subword splitting"},
        {"tokenizer", "entity_tokens", "true", "collapse entity spans to entity tokens"},

        {"pretrain", "enabled", "true", "run adaptive MLM pre-training"},
        {"pretrain", "alpha", "0.5", "masking probability for entity tokens"},
        {"pretrain", "beta", "0.1", "masking probability for ordinary tokens"},
        {"pretrain", "epochs", "50", "maximum pre-training epochs"},
        {"pretrain", "learning_rate", "5e-5", "pre-training learning rate"},
        {"pretrain", "batch_size", "32", "pre-training batch size"},
        {"pretrain", "eval_interval", "1000", "steps between dev-loss evaluations"},
        {"pretrain", "n_layers", "2", "encoder layers"},
        {"pretrain", "n_heads", "4", "attention heads"},
        {"pretrain", "d_model", "64", "hidden width"},
        {"pretrain", "d_ff", "256", "feed-forward width"},
        {"pretrain", "dropout", "0.1", "dropout rate during training"},

        {"finetune", "head", "hmcn_local",
         "classification head: single_task | lcl | lcpn | hmcn_local | hmcn_global"},
        {"finetune", "lambda", "0.1", "weight of the upper-level loss term"},
        {"finetune", "epochs", "15", "maximum fine-tuning epochs"},
        {"finetune", "learning_rate", "5e-5", "fine-tuning learning rate"},
        {"finetune", "batch_size", "32", "fine-tuning batch size"},
        {"finetune", "eval_interval", "1000", "steps between dev macro-F1 evaluations"},
        {"finetune", "threshold", "0.5", "decision threshold for label prediction"},
        {"finetune", "freeze_encoder", "false", "train only the head"},
        {"finetune", "weight_decay", "0.01", "decoupled weight decay"},

        {"eval", "skip_zero_support", "false",
         "exclude labels with neither gold nor predicted positives from macro-F1"},

        {"baseline", "ngram_min", "1", "TF-IDF word n-gram lower bound"},
        {"baseline", "ngram_max", "2", "TF-IDF word n-gram upper bound"},
        {"baseline", "max_features", "5000", "TF-IDF vocabulary cap"},
        {"baseline", "l2", "0.1", "logistic regression L2 strength"},
        {"baseline", "grid_search", "true", "search TF-IDF+LR hyper-parameters on dev"},
    };
    return keys;
}

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

bool known_key(const std::string& section, const std::string& key) {
    for (const auto& k : config_registry())
        if (k.section == section && k.key == key) return true;
    return false;
}

}  // namespace

Config::Config() {
    for (const auto& k : config_registry()) values_[k.section][k.key] = k.default_value;
}

Config Config::parse_ini_text(const std::string& text) {
    Config cfg;
    std::istringstream in(text);
    std::string line, section;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']') throw ParseError("malformed section header", lineno);
            section = trim(t.substr(1, t.size() - 2));
            continue;
        }
        const size_t eq = t.find('=');
        if (eq == std::string::npos) throw ParseError("expected key = value", lineno);
        if (section.empty()) throw ParseError("key outside of any [section]", lineno);
        cfg.set(section, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    return cfg;
}

Config Config::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_ini_text(ss.str());
}

void Config::set(const std::string& section, const std::string& key, const std::string& value) {
    if (!known_key(section, key))
        throw ConfigError("unknown config key: " + section + "." + key);
    values_[section][key] = value;
}

void Config::set_override(const std::string& assignment) {
    const size_t eq = assignment.find('=');
    const size_t dot = assignment.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq)
        throw ConfigError("--set expects section.key=value, got: " + assignment);
    set(assignment.substr(0, dot), assignment.substr(dot + 1, eq - dot - 1),
        assignment.substr(eq + 1));
}

const std::string& Config::get(const std::string& section, const std::string& key) const {
    auto sit = values_.find(section);
    if (sit == values_.end()) throw ConfigError("unknown config section: " + section);
    auto kit = sit->second.find(key);
    if (kit == sit->second.end()) throw ConfigError("unknown config key: " + section + "." + key);
    return kit->second;
}

bool Config::get_bool(const std::string& section, const std::string& key) const {
    const std::string& v = get(section, key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("expected boolean for " + section + "." + key + ", got: " + v);
}

long Config::get_int(const std::string& section, const std::string& key) const {
    const std::string& v = get(section, key);
    try {
        size_t pos = 0;
        long r = std::stol(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("expected integer for " + section + "." + key + ", got: " + v);
    }
}

double Config::get_double(const std::string& section, const std::string& key) const {
    const std::string& v = get(section, key);
    try {
        size_t pos = 0;
        double r = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("expected number for " + section + "." + key + ", got: " + v);
    }
}

nlohmann::ordered_json Config::to_json() const {
    nlohmann::ordered_json j;
    for (const auto& [section, kv] : values_) {
        nlohmann::ordered_json s;
        for (const auto& [k, v] : kv) s[k] = v;
        j[section] = s;
    }
    return j;
}

std::string Config::canonical_text() const { return to_json().dump(); }

std::string Config::hash() const { return digest_string(canonical_text()); }

}  // namespace chmc

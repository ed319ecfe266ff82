#include "chmc/synthetic.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "chmc/errors.hpp"
#include "chmc/rng.hpp"
#include "chmc/utf8.hpp"

namespace chmc {

TemplateSet TemplateSet::from_json_text(const std::string& text) {
    nlohmann::ordered_json j;
    try {
        j = nlohmann::ordered_json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("templates JSON: ") + e.what());
    }
    TemplateSet ts;
    for (auto it = j.at("labels").begin(); it != j.at("labels").end(); ++it)
        ts.own[it.key()] = it.value().get<std::vector<std::string>>();
    if (j.contains("shared")) {
        for (const auto& g : j["shared"])
            ts.shared.emplace_back(g.at("labels").get<std::vector<std::string>>(),
                                   g.at("templates").get<std::vector<std::string>>());
    }
    return ts;
}

TemplateSet TemplateSet::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open templates file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json_text(ss.str());
}

void TemplateSet::validate(const LabelOntology& ontology) const {
    if (own.empty()) throw ConfigError("template set is empty");
    for (const auto& label : ontology.lower_labels()) {
        auto it = own.find(label);
        if (it == own.end() || it->second.empty())
            throw ConfigError("no templates for label: " + label);
    }
    for (const auto& [name, _] : own)
        if (!ontology.has_lower(name)) throw ConfigError("template for unknown label: " + name);
    for (const auto& [labels, templates] : shared) {
        if (templates.empty()) throw ConfigError("shared template group without templates");
        for (const auto& l : labels)
            if (!ontology.has_lower(l)) throw ConfigError("shared template for unknown label: " + l);
    }
}

void SyntheticSpec::validate() const {
    if (events_per_type.empty()) throw ConfigError("events_per_type is empty");
    if (tweets_per_event == 0) throw ConfigError("tweets_per_event must be positive");
    if (spurious_correlation < 0.0 || spurious_correlation > 1.0)
        throw ConfigError("spurious_correlation must lie in [0,1]");
    if (second_label_p < 0.0 || second_label_p > 1.0)
        throw ConfigError("second_label_p must lie in [0,1]");
}

SyntheticSpec SyntheticSpec::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open synthetic spec: " + path);
    nlohmann::ordered_json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("synthetic spec JSON: ") + e.what());
    }
    SyntheticSpec spec;
    spec.seed = j.value("seed", 13ULL);
    spec.tweets_per_event = j.value("tweets_per_event", 100ULL);
    spec.spurious_correlation = j.value("spurious_correlation", 0.0);
    spec.second_label_p = j.value("second_label_p", 0.2);
    for (auto it = j.at("events_per_type").begin(); it != j.at("events_per_type").end(); ++it) {
        const auto& v = it.value();
        spec.events_per_type[it.key()] = {v.at("train").get<size_t>(), v.at("test").get<size_t>()};
    }
    if (j.contains("entity_pool_sizes")) {
        for (auto it = j["entity_pool_sizes"].begin(); it != j["entity_pool_sizes"].end(); ++it)
            spec.entity_pool_sizes[it.key()] = it.value().get<size_t>();
    }
    std::string tpath = j.value("templates", std::string("data/templates.json"));
    if (!tpath.empty() && tpath[0] != '/') {
        auto dir = std::filesystem::path(path).parent_path();
        auto local = dir / tpath;
        if (std::filesystem::exists(local)) tpath = local.string();
    }
    spec.templates = TemplateSet::load(tpath);
    spec.validate();
    return spec;
}

namespace {

const char* kSyllables[] = {"ba",  "den", "kor", "mal", "ri",  "sun", "tev", "ol",  "pra",
                            "vin", "zed", "lum", "gar", "nes", "tor", "win", "fel", "dra",
                            "mon", "cal", "ser", "pim", "rok", "yal", "hub", "qua", "ex"};
constexpr size_t kNumSyllables = sizeof(kSyllables) / sizeof(kSyllables[0]);

std::string capitalize(std::string s) {
    if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 32);
    return s;
}

// Unique invented base names so entity pools stay disjoint across events and
// never collide with template vocabulary.
class NameFactory {
public:
    NameFactory(Rng& rng, std::set<std::string> reserved)
        : rng_(rng), reserved_(std::move(reserved)) {}

    std::string fresh(size_t syllables) {
        for (int attempt = 0; attempt < 1000; ++attempt) {
            std::string name;
            for (size_t i = 0; i < syllables; ++i) name += kSyllables[rng_.below(kNumSyllables)];
            if (reserved_.count(name)) continue;
            reserved_.insert(name);
            return name;
        }
        throw ConfigError("entity name space exhausted; reduce pool sizes");
    }

private:
    Rng& rng_;
    std::set<std::string> reserved_;
};

struct EventPools {
    std::string tag;                                       // unique event tag
    std::map<EntityType, std::vector<std::string>> pools;  // all 10 types
    std::map<std::string, std::string> signature;          // lower label -> hashtag
};

const char* kOrgSuffixes[] = {"Relief Council", "Aid Network", "Response Unit", "Rescue Corps"};
const char* kEventPrefixes[] = {"Cyclone", "Storm", "Operation"};
const char* kStreetSuffixes[] = {"Lane", "Road", "Street"};
const char* kMonthNames[] = {"January", "February", "March",     "April",   "June",
                             "July",    "August",   "September", "October", "November",
                             "December"};

size_t pool_size(const SyntheticSpec& spec, EntityType t, size_t fallback) {
    auto it = spec.entity_pool_sizes.find(entity_type_name(t));
    return it == spec.entity_pool_sizes.end() ? fallback : it->second;
}

EventPools make_event_pools(const SyntheticSpec& spec, NameFactory& names, Rng& rng,
                            const LabelOntology& ontology) {
    EventPools ep;
    ep.tag = names.fresh(2);
    auto& p = ep.pools;
    for (size_t i = 0; i < pool_size(spec, EntityType::Location, 4); ++i)
        p[EntityType::Location].push_back(capitalize(names.fresh(3)));
    for (size_t i = 0; i < pool_size(spec, EntityType::Person, 3); ++i)
        p[EntityType::Person].push_back(capitalize(names.fresh(2)) + " " +
                                        capitalize(names.fresh(2)));
    for (size_t i = 0; i < pool_size(spec, EntityType::Organization, 2); ++i)
        p[EntityType::Organization].push_back(capitalize(names.fresh(2)) + " " +
                                              kOrgSuffixes[rng.below(4)]);
    for (size_t i = 0; i < pool_size(spec, EntityType::Event, 1); ++i)
        p[EntityType::Event].push_back(std::string(kEventPrefixes[rng.below(3)]) + " " +
                                       capitalize(names.fresh(2)));
    for (size_t i = 0; i < pool_size(spec, EntityType::Address, 2); ++i)
        p[EntityType::Address].push_back(std::to_string(2 + rng.below(97)) + " " +
                                         capitalize(names.fresh(2)) + " " +
                                         kStreetSuffixes[rng.below(3)]);
    for (size_t i = 0; i < pool_size(spec, EntityType::Hashtag, 3); ++i)
        p[EntityType::Hashtag].push_back("#" + ep.tag + names.fresh(1));
    for (size_t i = 0; i < pool_size(spec, EntityType::Url, 2); ++i)
        p[EntityType::Url].push_back("http://relf.news/" + ep.tag + names.fresh(1));
    for (size_t i = 0; i < pool_size(spec, EntityType::PhoneNumber, 2); ++i) {
        std::string ph = "555-";
        for (int k = 0; k < 3; ++k) ph += static_cast<char>('0' + rng.below(10));
        ph += '-';
        for (int k = 0; k < 4; ++k) ph += static_cast<char>('0' + rng.below(10));
        p[EntityType::PhoneNumber].push_back(ph);
    }
    for (size_t i = 0; i < pool_size(spec, EntityType::Date, 3); ++i) {
        const std::string month = kMonthNames[rng.below(11)];
        const std::string day = std::to_string(2 + rng.below(26));
        const std::string year = std::to_string(2019 + rng.below(4));
        switch (rng.below(3)) {
            case 0: p[EntityType::Date].push_back(month + " " + day); break;
            case 1: p[EntityType::Date].push_back(month + " " + year); break;
            default: p[EntityType::Date].push_back(day + " " + month + " " + year); break;
        }
    }
    for (size_t i = 0; i < pool_size(spec, EntityType::Number, 6); ++i) {
        if (rng.below(4) == 0) {
            p[EntityType::Number].push_back(std::to_string(1 + rng.below(9)) + "." +
                                            std::to_string(rng.below(10)));
        } else {
            p[EntityType::Number].push_back(std::to_string(2 + rng.below(998)));
        }
    }
    // one signature hashtag per lower label, distinct from the hashtag pool
    for (const auto& label : ontology.lower_labels()) {
        std::string tail;
        for (char c : label)
            if (tail.size() < 5 && c >= 'A') tail += static_cast<char>(c >= 'a' ? c : c + 32);
        ep.signature[label] = "#" + ep.tag + tail;
    }
    return ep;
}

std::set<std::string> template_word_set(const TemplateSet& ts) {
    std::set<std::string> words;
    auto add_words = [&](const std::string& t) {
        std::string w;
        for (char c : t) {
            if (c == ' ' || c == '{' || c == '}') {
                if (!w.empty()) words.insert(w);
                w.clear();
            } else {
                w += static_cast<char>(c >= 'A' && c <= 'Z' ? c + 32 : c);
            }
        }
        if (!w.empty()) words.insert(w);
    };
    for (const auto& [_, temps] : ts.own)
        for (const auto& t : temps) add_words(t);
    for (const auto& [_, temps] : ts.shared)
        for (const auto& t : temps) add_words(t);
    return words;
}

struct Renderer {
    const EventPools& pools;
    Rng& rng;
    std::string text;
    size_t cp_len = 0;
    std::vector<EntitySpan> spans;

    void append_plain(const std::string& s) {
        text += s;
        cp_len += utf8::length(s);
    }

    void append_entity(EntityType type, const std::string& surface) {
        const size_t start = cp_len;
        append_plain(surface);
        spans.push_back({start, cp_len, type, surface});
    }

    void render_template(const std::string& tmpl) {
        size_t i = 0;
        while (i < tmpl.size()) {
            if (tmpl[i] == '{') {
                const size_t close = tmpl.find('}', i);
                if (close == std::string::npos) throw ConfigError("unbalanced { in template: " + tmpl);
                const std::string type_name = tmpl.substr(i + 1, close - i - 1);
                const EntityType type = entity_type_from_name(type_name);
                const auto it = pools.pools.find(type);
                if (it == pools.pools.end() || it->second.empty())
                    throw ConfigError("event pool has no entities of type " + type_name);
                append_entity(type, it->second[rng.below(it->second.size())]);
                i = close + 1;
            } else {
                const size_t next = std::min(tmpl.find('{', i), tmpl.size());
                append_plain(tmpl.substr(i, next - i));
                i = next;
            }
        }
    }
};

}  // namespace

SyntheticResult generate_synthetic(const SyntheticSpec& spec, const LabelOntology& ontology) {
    spec.validate();
    spec.templates.validate(ontology);

    SyntheticResult out;
    Rng name_rng(mix_seed(spec.seed, "names"));
    NameFactory names(name_rng, template_word_set(spec.templates));

    // per-label template pools: own plus any shared group containing the label
    std::map<std::string, std::vector<std::string>> pool_templates = spec.templates.own;
    for (const auto& [labels, temps] : spec.templates.shared)
        for (const auto& l : labels)
            for (const auto& t : temps) pool_templates[l].push_back(t);

    const auto& lower = ontology.lower_labels();
    size_t event_counter = 0;
    for (const auto& [event_type, counts] : spec.events_per_type) {
        const auto& [n_train, n_test] = counts;
        for (size_t k = 0; k < n_train + n_test; ++k) {
            const bool is_test = k >= n_train;
            Rng ev_rng(mix_seed(spec.seed, "event", event_counter));
            EventPools pools = make_event_pools(spec, names, ev_rng, ontology);
            const std::string event_id = event_type + "-" + pools.tag;
            (is_test ? out.split.test_event_ids : out.split.train_event_ids).insert(event_id);
            for (const auto& [type, entries] : pools.pools) {
                if (type == EntityType::Person || type == EntityType::Location ||
                    type == EntityType::Organization || type == EntityType::Event ||
                    type == EntityType::Address) {
                    for (const auto& e : entries) out.gazetteer.add(type, e);
                }
            }

            for (size_t ti = 0; ti < spec.tweets_per_event; ++ti) {
                Rng rng(mix_seed(mix_seed(spec.seed, "tweet", event_counter), ti));
                AnnotatedTweet tweet;
                tweet.event_id = event_id;
                tweet.event_type = event_type;
                tweet.id = event_id + "-" + std::to_string(ti);

                std::vector<std::string> chosen;
                chosen.push_back(lower[rng.below(lower.size())]);
                if (rng.uniform() < spec.second_label_p) {
                    std::string second = lower[rng.below(lower.size())];
                    if (second != chosen[0]) chosen.push_back(second);
                }

                Renderer r{pools, rng, {}, 0, {}};
                for (size_t li = 0; li < chosen.size(); ++li) {
                    if (li > 0) r.append_plain(" ");
                    const auto& temps = pool_templates.at(chosen[li]);
                    r.render_template(temps[rng.below(temps.size())]);
                }
                for (const auto& label : chosen) {
                    if (rng.uniform() < spec.spurious_correlation) {
                        r.append_plain(" ");
                        r.append_entity(EntityType::Hashtag, pools.signature.at(label));
                    }
                }

                tweet.text = std::move(r.text);
                tweet.entities = std::move(r.spans);
                tweet.lower_labels.insert(chosen.begin(), chosen.end());
                tweet.upper_labels = ontology.derive_upper(tweet.lower_labels);
                validate_spans(tweet.text, tweet.entities);
                out.corpus.push_back(std::move(tweet));
            }
            ++event_counter;
        }
    }
    return out;
}

}  // namespace chmc

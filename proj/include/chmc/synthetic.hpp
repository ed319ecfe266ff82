#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "chmc/corpus.hpp"
#include "chmc/ner.hpp"
#include "chmc/ontology.hpp"

namespace chmc {

// Label-conditional tweet templates with {entity_type} placeholders.
// Templates listed under "shared" belong to several labels at once, which
// caps how well text alone can separate those labels.
struct TemplateSet {
    std::map<std::string, std::vector<std::string>> own;
    std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>> shared;

    static TemplateSet load(const std::string& path);
    static TemplateSet from_json_text(const std::string& text);
    void validate(const LabelOntology& ontology) const;
};

// Generator knobs. Each event draws a disjoint entity pool; with probability
// spurious_correlation a tweet carrying label L also carries the event's
// signature hashtag for L, which models event-specific label bias.
struct SyntheticSpec {
    std::map<std::string, std::pair<size_t, size_t>> events_per_type;  // type -> (train, test)
    size_t tweets_per_event = 100;
    std::map<std::string, size_t> entity_pool_sizes;  // by entity type name
    double spurious_correlation = 0.0;
    double second_label_p = 0.2;
    uint64_t seed = 13;
    TemplateSet templates;

    void validate() const;
    // Relative template paths resolve against the spec file's directory.
    static SyntheticSpec load(const std::string& path);
};

struct SyntheticResult {
    Corpus corpus;
    DatasetSplit split;
    Gazetteer gazetteer;  // the generator's own name-like entity pools
};

SyntheticResult generate_synthetic(const SyntheticSpec& spec, const LabelOntology& ontology);

}  // namespace chmc

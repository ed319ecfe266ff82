#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "chmc/ner.hpp"
#include "chmc/ontology.hpp"

namespace chmc {

// One annotated tweet. Upper labels are always derived from lower labels;
// they are never stored independently.
struct AnnotatedTweet {
    std::string id;
    std::string event_id;
    std::string event_type;
    std::string text;
    std::vector<EntitySpan> entities;
    std::set<std::string> lower_labels;
    std::set<std::string> upper_labels;
};

using Corpus = std::vector<AnnotatedTweet>;

// Disjoint train/test event sets for cross-event evaluation.
struct DatasetSplit {
    std::set<std::string> train_event_ids;
    std::set<std::string> test_event_ids;
};

std::set<std::string> derive_upper_labels(const std::set<std::string>& lower,
                                          const LabelOntology& ontology);

// JSON Lines, one tweet per line. Validates labels against the ontology and
// entity spans against the text; derives upper labels.
Corpus load_corpus(const std::string& path, const LabelOntology& ontology);
Corpus parse_corpus_jsonl(const std::string& text, const LabelOntology& ontology);

void save_corpus(const Corpus& corpus, const std::string& path);
std::string corpus_to_jsonl(const Corpus& corpus);

// Every tweet's event id must appear in exactly one side of the split.
std::pair<Corpus, Corpus> split_by_event(const Corpus& corpus, const DatasetSplit& split);

// Multi-label stratified split: iterative proportional assignment,
// rarest label first, with hard total-size caps. Returns (fit, dev) where
// |fit| is within +-1 of ratio*N.
std::pair<Corpus, Corpus> stratified_dev_split(const Corpus& train, double ratio, uint64_t seed,
                                               const LabelOntology& ontology);

}  // namespace chmc

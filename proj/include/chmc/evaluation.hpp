#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "chmc/corpus.hpp"
#include "chmc/ontology.hpp"

namespace chmc {

struct LabelMetrics {
    std::string label;
    size_t support = 0;    // gold positives
    size_t predicted = 0;  // predicted positives
    size_t tp = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct MacroResult {
    std::vector<LabelMetrics> per_label;
    double macro_f1 = 0.0;
    size_t labels_counted = 0;
};

// Document-level multi-label macro F1. Zero-support labels score F1 = 0 and
// are included by default; with skip_zero_support, labels with neither gold
// nor predicted positives are left out of the macro.
MacroResult macro_f1(const std::vector<std::set<std::string>>& pred,
                     const std::vector<std::set<std::string>>& gold,
                     const std::vector<std::string>& labels, bool skip_zero_support = false);

struct EventTypeStats {
    double mean = 0.0;
    double stddev = 0.0;  // population
    size_t n_events = 0;
};

// Lower-level macro-F1 per event, aggregated per event type.
std::map<std::string, EventTypeStats> per_event_type_report(
    const std::vector<std::set<std::string>>& pred_lower, const Corpus& corpus,
    const LabelOntology& ontology, bool skip_zero_support, std::vector<std::string>* notices);

struct EvalReport {
    std::vector<LabelMetrics> per_label_upper;
    std::vector<LabelMetrics> per_label_lower;
    double macro_f1_upper = 0.0;
    double macro_f1_lower = 0.0;
    double macro_f1_ait = 0.0;
    std::map<std::string, EventTypeStats> per_event_type;
    std::vector<std::string> notices;
    nlohmann::ordered_json config_echo;
};

EvalReport evaluate_predictions(const std::vector<std::set<std::string>>& pred_upper,
                                const std::vector<std::set<std::string>>& pred_lower,
                                const Corpus& corpus, const LabelOntology& ontology,
                                bool skip_zero_support = false);

// JSON ("eval-v1"), CSV per-label table, and a bar/error-bar SVG figure.
void write_report_json(const EvalReport& report, const std::string& path);
void write_report_csv(const EvalReport& report, const std::string& path);
void write_report_svg(const EvalReport& report, const std::string& path);

nlohmann::ordered_json report_to_json(const EvalReport& report);

}  // namespace chmc

#include "chmc/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "chmc/errors.hpp"

namespace chmc {

MacroResult macro_f1(const std::vector<std::set<std::string>>& pred,
                     const std::vector<std::set<std::string>>& gold,
                     const std::vector<std::string>& labels, bool skip_zero_support) {
    if (pred.size() != gold.size())
        throw ValidationError("macro_f1: prediction and gold document counts differ");
    MacroResult res;
    double sum = 0.0;
    for (const auto& label : labels) {
        LabelMetrics m;
        m.label = label;
        for (size_t d = 0; d < pred.size(); ++d) {
            const bool p = pred[d].count(label) > 0;
            const bool g = gold[d].count(label) > 0;
            if (g) ++m.support;
            if (p) ++m.predicted;
            if (p && g) ++m.tp;
        }
        m.precision = m.predicted ? static_cast<double>(m.tp) / static_cast<double>(m.predicted) : 0.0;
        m.recall = m.support ? static_cast<double>(m.tp) / static_cast<double>(m.support) : 0.0;
        m.f1 = (m.precision + m.recall) > 0.0
                   ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
                   : 0.0;
        res.per_label.push_back(m);
        if (skip_zero_support && m.support == 0 && m.predicted == 0) continue;
        sum += m.f1;
        ++res.labels_counted;
    }
    res.macro_f1 = res.labels_counted ? sum / static_cast<double>(res.labels_counted) : 0.0;
    return res;
}

std::map<std::string, EventTypeStats> per_event_type_report(
    const std::vector<std::set<std::string>>& pred_lower, const Corpus& corpus,
    const LabelOntology& ontology, bool skip_zero_support, std::vector<std::string>* notices) {
    if (pred_lower.size() != corpus.size())
        throw ValidationError("per_event_type_report: prediction count mismatch");

    // group documents by event
    std::map<std::string, std::vector<size_t>> event_docs;
    std::map<std::string, std::string> event_type_of;
    for (size_t i = 0; i < corpus.size(); ++i) {
        event_docs[corpus[i].event_id].push_back(i);
        event_type_of[corpus[i].event_id] = corpus[i].event_type;
    }

    std::map<std::string, std::vector<double>> type_scores;
    for (const auto& [event_id, docs] : event_docs) {
        std::vector<std::set<std::string>> p, g;
        for (size_t i : docs) {
            p.push_back(pred_lower[i]);
            g.push_back(corpus[i].lower_labels);
        }
        const double score = macro_f1(p, g, ontology.lower_labels(), skip_zero_support).macro_f1;
        type_scores[event_type_of[event_id]].push_back(score);
    }

    std::map<std::string, EventTypeStats> out;
    for (const auto& [type, scores] : type_scores) {
        if (scores.empty()) {
            if (notices) notices->push_back("event type without scored events omitted: " + type);
            continue;
        }
        EventTypeStats st;
        st.n_events = scores.size();
        for (double s : scores) st.mean += s;
        st.mean /= static_cast<double>(scores.size());
        double var = 0.0;
        for (double s : scores) var += (s - st.mean) * (s - st.mean);
        st.stddev = std::sqrt(var / static_cast<double>(scores.size()));
        out[type] = st;
    }
    return out;
}

EvalReport evaluate_predictions(const std::vector<std::set<std::string>>& pred_upper,
                                const std::vector<std::set<std::string>>& pred_lower,
                                const Corpus& corpus, const LabelOntology& ontology,
                                bool skip_zero_support) {
    std::vector<std::set<std::string>> gold_upper, gold_lower;
    gold_upper.reserve(corpus.size());
    gold_lower.reserve(corpus.size());
    for (const auto& t : corpus) {
        gold_upper.push_back(t.upper_labels);
        gold_lower.push_back(t.lower_labels);
    }
    EvalReport rep;
    auto upper = macro_f1(pred_upper, gold_upper, ontology.upper_labels(), skip_zero_support);
    auto lower = macro_f1(pred_lower, gold_lower, ontology.lower_labels(), skip_zero_support);
    std::vector<std::string> ait_labels(ontology.ait().begin(), ontology.ait().end());
    auto ait = macro_f1(pred_lower, gold_lower, ait_labels, skip_zero_support);
    rep.per_label_upper = std::move(upper.per_label);
    rep.per_label_lower = std::move(lower.per_label);
    rep.macro_f1_upper = upper.macro_f1;
    rep.macro_f1_lower = lower.macro_f1;
    rep.macro_f1_ait = ait.macro_f1;
    rep.per_event_type =
        per_event_type_report(pred_lower, corpus, ontology, skip_zero_support, &rep.notices);
    return rep;
}

nlohmann::ordered_json report_to_json(const EvalReport& report) {
    nlohmann::ordered_json j;
    j["schema"] = "eval-v1";
    j["macro_f1_upper"] = report.macro_f1_upper;
    j["macro_f1_lower"] = report.macro_f1_lower;
    j["macro_f1_ait"] = report.macro_f1_ait;
    auto label_block = [](const std::vector<LabelMetrics>& ms) {
        nlohmann::ordered_json arr = nlohmann::ordered_json::array();
        for (const auto& m : ms) {
            arr.push_back({{"label", m.label},
                           {"support", m.support},
                           {"predicted", m.predicted},
                           {"precision", m.precision},
                           {"recall", m.recall},
                           {"f1", m.f1}});
        }
        return arr;
    };
    j["per_label_upper"] = label_block(report.per_label_upper);
    j["per_label_lower"] = label_block(report.per_label_lower);
    nlohmann::ordered_json types = nlohmann::ordered_json::object();
    for (const auto& [type, st] : report.per_event_type)
        types[type] = {{"mean", st.mean}, {"stddev", st.stddev}, {"n_events", st.n_events}};
    j["per_event_type"] = types;
    j["notices"] = report.notices;
    j["config_echo"] = report.config_echo;
    return j;
}

void write_report_json(const EvalReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write report: " + path);
    out << report_to_json(report).dump(2) << "\n";
}

void write_report_csv(const EvalReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write report: " + path);
    out << "label,support,precision,recall,f1\n";
    char buf[160];
    for (const auto& m : report.per_label_lower) {
        std::snprintf(buf, sizeof(buf), "%s,%zu,%.6f,%.6f,%.6f\n", m.label.c_str(), m.support,
                      m.precision, m.recall, m.f1);
        out << buf;
    }
}

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

// minimal bar chart with optional error bars
void svg_bars(std::ofstream& out, double x0, double y0, double w, double h,
              const std::vector<std::string>& names, const std::vector<double>& values,
              const std::vector<double>& errors, const std::string& title) {
    const double axis_h = h - 40.0;
    out << "<text x=\"" << fmt(x0) << "\" y=\"" << fmt(y0 - 8) << "\" font-size=\"13\">" << title
        << "</text>\n";
    out << "<line x1=\"" << fmt(x0) << "\" y1=\"" << fmt(y0 + axis_h) << "\" x2=\""
        << fmt(x0 + w) << "\" y2=\"" << fmt(y0 + axis_h) << "\" stroke=\"black\"/>\n";
    if (names.empty()) return;
    const double slot = w / static_cast<double>(names.size());
    const double bar_w = slot * 0.6;
    for (size_t i = 0; i < names.size(); ++i) {
        const double v = std::clamp(values[i], 0.0, 1.0);
        const double bx = x0 + slot * static_cast<double>(i) + slot * 0.2;
        const double bh = axis_h * v;
        out << "<rect x=\"" << fmt(bx) << "\" y=\"" << fmt(y0 + axis_h - bh) << "\" width=\""
            << fmt(bar_w) << "\" height=\"" << fmt(bh) << "\" fill=\"#4878a8\"/>\n";
        if (!errors.empty() && errors[i] > 0.0) {
            const double cx = bx + bar_w / 2.0;
            const double e = errors[i] * axis_h;
            const double ytop = y0 + axis_h - std::min(axis_h, bh + e);
            const double ybot = y0 + axis_h - std::max(0.0, bh - e);
            out << "<line x1=\"" << fmt(cx) << "\" y1=\"" << fmt(ytop) << "\" x2=\"" << fmt(cx)
                << "\" y2=\"" << fmt(ybot) << "\" stroke=\"#222222\"/>\n";
        }
        out << "<text x=\"" << fmt(bx + bar_w / 2.0) << "\" y=\"" << fmt(y0 + axis_h + 12)
            << "\" font-size=\"8\" text-anchor=\"end\" transform=\"rotate(-45 "
            << fmt(bx + bar_w / 2.0) << " " << fmt(y0 + axis_h + 12) << ")\">" << names[i]
            << "</text>\n";
    }
}

}  // namespace

void write_report_svg(const EvalReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write figure: " + path);
    const double width = 980.0;
    const double height = 560.0;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(width) << "\" height=\""
        << fmt(height) << "\" font-family=\"sans-serif\">\n";
    {
        std::vector<std::string> names;
        std::vector<double> values;
        for (const auto& m : report.per_label_lower) {
            names.push_back(m.label);
            values.push_back(m.f1);
        }
        svg_bars(out, 40, 30, width - 80, 220, names, values, {},
                 "per-label F1 (lower level), macro " + fmt(report.macro_f1_lower));
    }
    {
        std::vector<std::string> names;
        std::vector<double> values, errors;
        for (const auto& [type, st] : report.per_event_type) {
            names.push_back(type);
            values.push_back(st.mean);
            errors.push_back(st.stddev);
        }
        svg_bars(out, 40, 330, width - 80, 200, names, values, errors,
                 "per-event-type lower macro F1 (mean and stddev across events)");
    }
    out << "</svg>\n";
}

}  // namespace chmc

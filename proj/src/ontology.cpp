#include "chmc/ontology.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "chmc/errors.hpp"

namespace chmc {

LabelOntology::LabelOntology(const std::vector<std::pair<std::string, std::string>>& parents,
                             const std::vector<std::string>& ait) {
    for (const auto& [lower, upper] : parents) {
        if (lower_index_.count(lower))
            throw ValidationError("duplicate lower label in ontology: " + lower);
        lower_index_[lower] = lower_.size();
        lower_.push_back(lower);
        auto it = upper_index_.find(upper);
        size_t uidx;
        if (it == upper_index_.end()) {
            uidx = upper_.size();
            upper_index_[upper] = uidx;
            upper_.push_back(upper);
            children_.emplace_back();
        } else {
            uidx = it->second;
        }
        parent_idx_.push_back(uidx);
        children_[uidx].push_back(lower_.size() - 1);
    }
    for (const auto& a : ait) {
        if (!lower_index_.count(a)) throw ValidationError("ait label not in ontology: " + a);
        ait_.insert(a);
    }
    if (ait_.size() != ait.size()) throw ValidationError("duplicate ait labels");
}

LabelOntology LabelOntology::from_json_text(const std::string& text) {
    nlohmann::ordered_json j;
    try {
        j = nlohmann::ordered_json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("ontology JSON: ") + e.what());
    }
    if (!j.contains("parents") || !j["parents"].is_object())
        throw ParseError("ontology JSON: missing \"parents\" object");
    if (!j.contains("ait") || !j["ait"].is_array())
        throw ParseError("ontology JSON: missing \"ait\" array");
    std::vector<std::pair<std::string, std::string>> parents;
    for (auto it = j["parents"].begin(); it != j["parents"].end(); ++it)
        parents.emplace_back(it.key(), it.value().get<std::string>());
    std::vector<std::string> ait;
    for (const auto& a : j["ait"]) ait.push_back(a.get<std::string>());
    return LabelOntology(parents, ait);
}

LabelOntology LabelOntology::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open ontology file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json_text(ss.str());
}

size_t LabelOntology::lower_index(const std::string& name) const {
    auto it = lower_index_.find(name);
    if (it == lower_index_.end()) throw ValidationError("unknown lower label: " + name);
    return it->second;
}

size_t LabelOntology::upper_index(const std::string& name) const {
    auto it = upper_index_.find(name);
    if (it == upper_index_.end()) throw ValidationError("unknown upper label: " + name);
    return it->second;
}

const std::string& LabelOntology::parent_of(const std::string& lower) const {
    return upper_[parent_idx_[lower_index(lower)]];
}

std::set<std::string> LabelOntology::derive_upper(const std::set<std::string>& lower) const {
    std::set<std::string> out;
    for (const auto& l : lower) out.insert(parent_of(l));
    return out;
}

std::vector<size_t> LabelOntology::ait_indices() const {
    std::vector<size_t> out;
    for (const auto& a : ait_) out.push_back(lower_index_.at(a));
    return out;
}

}  // namespace chmc

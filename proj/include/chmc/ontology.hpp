#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

namespace chmc {

// Two-level label hierarchy: 4 upper classes over 25 lower information
// types, plus the 6-label actionable subset. Label order follows the
// ontology file and fixes the index layout used by heads and metrics.
class LabelOntology {
public:
    // parents: lower label -> upper label, in the order lower labels should
    // be indexed. ait: the actionable lower labels.
    LabelOntology(const std::vector<std::pair<std::string, std::string>>& parents,
                  const std::vector<std::string>& ait);

    static LabelOntology load(const std::string& path);
    static LabelOntology from_json_text(const std::string& text);

    const std::vector<std::string>& upper_labels() const { return upper_; }
    const std::vector<std::string>& lower_labels() const { return lower_; }
    const std::set<std::string>& ait() const { return ait_; }

    bool has_lower(const std::string& name) const { return lower_index_.count(name) > 0; }
    bool has_upper(const std::string& name) const { return upper_index_.count(name) > 0; }

    // Throw ValidationError naming the label when unknown.
    size_t lower_index(const std::string& name) const;
    size_t upper_index(const std::string& name) const;
    const std::string& parent_of(const std::string& lower) const;
    size_t parent_index_of(size_t lower_idx) const { return parent_idx_[lower_idx]; }

    // Lower-label indices grouped by parent, in upper-label order.
    const std::vector<std::vector<size_t>>& children() const { return children_; }

    size_t n_upper() const { return upper_.size(); }
    size_t n_lower() const { return lower_.size(); }

    std::set<std::string> derive_upper(const std::set<std::string>& lower) const;

    // AIT indices into the lower-label list.
    std::vector<size_t> ait_indices() const;

private:
    std::vector<std::string> upper_;
    std::vector<std::string> lower_;
    std::map<std::string, size_t> upper_index_;
    std::map<std::string, size_t> lower_index_;
    std::vector<size_t> parent_idx_;  // per lower label
    std::vector<std::vector<size_t>> children_;
    std::set<std::string> ait_;
};

}  // namespace chmc

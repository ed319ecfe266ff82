#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace chmc {

// Closed set of entity categories. Enumeration order is the tie-break
// order in overlap resolution and the entity-token id order in the vocab.
enum class EntityType : uint8_t {
    Hashtag = 0,
    Url,
    Person,
    Location,
    Organization,
    Event,
    Address,
    PhoneNumber,
    Date,
    Number,
};

constexpr size_t kNumEntityTypes = 10;

const char* entity_type_name(EntityType t);
EntityType entity_type_from_name(const std::string& name);

// Span offsets count Unicode scalar values; end is exclusive.
struct EntitySpan {
    size_t start = 0;
    size_t end = 0;
    EntityType type = EntityType::Hashtag;
    std::string surface;

    bool operator==(const EntitySpan&) const = default;
};

// Surface-form lists for the name-like entity types. Matching is
// case-insensitive whole-token; multi-word entries are supported.
class Gazetteer {
public:
    Gazetteer() = default;

    void add(EntityType type, const std::string& surface);

    // One file per entity type, one surface form per line. Missing files
    // are allowed (empty list for that type).
    static Gazetteer load_dir(const std::string& dir);

    const std::vector<std::string>& entries(EntityType type) const;

    bool empty() const;

private:
    std::array<std::vector<std::string>, kNumEntityTypes> entries_;
    std::array<std::map<std::string, bool>, kNumEntityTypes> seen_;
};

// Pattern + gazetteer annotation. Output is non-overlapping and sorted by
// start offset.
std::vector<EntitySpan> annotate(const std::string& text, const Gazetteer& gazetteer);

// Keeps the longest span among overlapping candidates; ties broken by
// smaller start, then by EntityType enumeration order.
std::vector<EntitySpan> resolve_overlaps(std::vector<EntitySpan> spans);

struct NerScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    size_t true_positives = 0;
    size_t pred_count = 0;
    size_t gold_count = 0;
};

// Micro-averaged strict F1: a prediction is correct only when an unmatched
// gold span with identical (start, end, type) exists in the same document.
NerScore strict_ner_f1(const std::vector<std::vector<EntitySpan>>& gold,
                       const std::vector<std::vector<EntitySpan>>& pred);

// Checks bounds and surface agreement against the text; throws
// ValidationError when violated.
void validate_spans(const std::string& text, const std::vector<EntitySpan>& spans);

}  // namespace chmc

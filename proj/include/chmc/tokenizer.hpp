#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "chmc/ner.hpp"

namespace chmc {

// Reserved special ids. The 10 entity tokens follow MASK in EntityType
// enumeration order, so specials occupy ids 0..14.
constexpr int kPadId = 0;
constexpr int kUnkId = 1;
constexpr int kClsId = 2;
constexpr int kSepId = 3;
constexpr int kMaskId = 4;
constexpr int kFirstEntityId = 5;
constexpr int kNumSpecials = 15;

inline int entity_token_id(EntityType t) { return kFirstEntityId + static_cast<int>(t); }
inline bool is_entity_token_id(int id) { return id >= kFirstEntityId && id < kNumSpecials; }

// Subword vocabulary: specials, then base characters, then merged tokens.
// Non-initial subwords carry a "##" continuation prefix.
class Vocab {
public:
    Vocab() = default;

    static Vocab from_tokens(std::vector<std::string> tokens, bool lowercase);

    // Frequency-based pair merging over whitespace-split words until the
    // vocabulary reaches target_size. Deterministic given corpus order.
    static Vocab train(const std::vector<std::string>& texts, size_t target_size,
                       bool lowercase = true);

    static Vocab load(const std::string& path);
    void save(const std::string& path) const;

    size_t size() const { return tokens_.size(); }
    const std::string& token(int id) const;
    int id_of(const std::string& token) const;  // -1 when absent
    bool lowercase() const { return lowercase_; }

    // Greedy longest-match subword split of a single word. Yields UNK when
    // the word cannot be covered.
    std::vector<int> split_word(const std::string& word) const;

private:
    std::vector<std::string> tokens_;
    std::map<std::string, int> index_;
    bool lowercase_ = true;
    size_t max_token_cps_ = 1;
};

// Per-position source reference: character range in Unicode scalar values,
// or the covering entity span index for entity tokens.
struct TokenAlignment {
    size_t start = 0;
    size_t end = 0;
    int entity_index = -1;
};

struct TokenSequence {
    std::vector<int> ids;
    std::vector<uint8_t> is_special;       // CLS / SEP / PAD
    std::vector<uint8_t> is_entity;        // one of the 10 entity-token ids
    std::vector<uint8_t> is_continuation;  // "##" subword
    std::vector<TokenAlignment> alignment;

    size_t size() const { return ids.size(); }
    // Number of positions before padding (CLS and SEP included).
    size_t content_length() const;
};

// Entity spans collapse to one entity token each; remaining segments are
// subword-tokenized. CLS prepended, SEP appended, PAD to max_len.
TokenSequence encode(const std::string& text, const std::vector<EntitySpan>& entities,
                     const Vocab& vocab, size_t max_len);

// Specials omitted; entity tokens render as their placeholder names;
// continuation subwords join without a space.
std::string decode(const TokenSequence& seq, const Vocab& vocab);

}  // namespace chmc

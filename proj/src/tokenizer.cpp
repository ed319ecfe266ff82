#include "chmc/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "chmc/errors.hpp"
#include "chmc/utf8.hpp"

namespace chmc {

namespace {

const char* kSpecialSurfaces[kNumSpecials] = {
    "[PAD]",    "[UNK]",          "[CLS]",   "[SEP]",     "[MASK]",
    "<hashtag>", "<url>",          "<person>", "<location>", "<organization>",
    "<event>",  "<address>",      "<phone_number>", "<date>", "<number>",
};

bool is_space_cp(char32_t c) { return c == U' ' || c == U'\t' || c == U'\n' || c == U'\r'; }

std::string lowercase_utf8(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) out.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c + 32) : c);
    return out;
}

// word -> [c0, ##c1, ##c2, ...]
std::vector<std::string> word_symbols(const std::string& word) {
    auto cps = utf8::decode(word);
    std::vector<std::string> syms;
    syms.reserve(cps.size());
    for (size_t i = 0; i < cps.size(); ++i) {
        std::string s = i == 0 ? "" : "##";
        utf8::append(s, cps[i]);
        syms.push_back(std::move(s));
    }
    return syms;
}

std::string merge_symbols(const std::string& left, const std::string& right) {
    std::string r = right;
    if (r.rfind("##", 0) == 0) r = r.substr(2);
    return left + r;
}

}  // namespace

size_t TokenSequence::content_length() const {
    size_t n = 0;
    while (n < ids.size() && ids[n] != kPadId) ++n;
    return n;
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens, bool lowercase) {
    Vocab v;
    v.lowercase_ = lowercase;
    v.tokens_ = std::move(tokens);
    for (size_t i = 0; i < v.tokens_.size(); ++i) {
        if (v.index_.count(v.tokens_[i]))
            throw ValidationError("duplicate token in vocabulary: " + v.tokens_[i]);
        v.index_[v.tokens_[i]] = static_cast<int>(i);
    }
    for (size_t i = kNumSpecials; i < v.tokens_.size(); ++i) {
        size_t cps = utf8::length(v.tokens_[i]);
        v.max_token_cps_ = std::max(v.max_token_cps_, cps);
    }
    return v;
}

Vocab Vocab::train(const std::vector<std::string>& texts, size_t target_size, bool lowercase) {
    // whitespace-split word counts, order of first occurrence kept for
    // deterministic tie handling downstream
    std::map<std::string, long> counts;
    std::vector<std::string> word_order;
    for (const auto& text : texts) {
        auto cps = utf8::decode(lowercase ? lowercase_utf8(text) : text);
        size_t i = 0;
        while (i < cps.size()) {
            if (is_space_cp(cps[i])) {
                ++i;
                continue;
            }
            size_t s = i;
            while (i < cps.size() && !is_space_cp(cps[i])) ++i;
            std::string w = utf8::encode(cps, s, i);
            auto it = counts.find(w);
            if (it == counts.end()) {
                counts[w] = 1;
                word_order.push_back(w);
            } else {
                ++it->second;
            }
        }
    }
    if (word_order.empty()) throw ValidationError("cannot train vocabulary on an empty corpus");

    std::vector<std::vector<std::string>> seqs;
    std::vector<long> freqs;
    seqs.reserve(word_order.size());
    for (const auto& w : word_order) {
        seqs.push_back(word_symbols(w));
        freqs.push_back(counts[w]);
    }

    // base inventory: the observed initial and continuation character forms
    std::map<std::string, bool> base_initial, base_cont;
    for (const auto& seq : seqs)
        for (const auto& s : seq) (s.rfind("##", 0) == 0 ? base_cont : base_initial)[s] = true;
    size_t base_count = base_initial.size() + base_cont.size();
    if (target_size <= kNumSpecials + base_count)
        throw ConfigError("vocab target size " + std::to_string(target_size) +
                          " too small; need > " + std::to_string(kNumSpecials + base_count));

    std::vector<std::string> tokens(kSpecialSurfaces, kSpecialSurfaces + kNumSpecials);
    std::map<std::string, bool> have;
    for (const auto& t : tokens) have[t] = true;
    for (const auto& [t, _] : base_initial) {
        tokens.push_back(t);
        have[t] = true;
    }
    for (const auto& [t, _] : base_cont) {
        tokens.push_back(t);
        have[t] = true;
    }

    while (tokens.size() < target_size) {
        // count adjacent pairs weighted by word frequency
        std::map<std::pair<std::string, std::string>, long> pair_counts;
        for (size_t w = 0; w < seqs.size(); ++w) {
            const auto& seq = seqs[w];
            for (size_t i = 0; i + 1 < seq.size(); ++i)
                pair_counts[{seq[i], seq[i + 1]}] += freqs[w];
        }
        if (pair_counts.empty()) break;
        // max count; ties resolved by lexicographically smaller pair (the
        // std::map iterates in sorted order, so first max wins)
        std::pair<std::string, std::string> best;
        long best_count = 0;
        for (const auto& [pair, cnt] : pair_counts) {
            if (cnt > best_count) {
                best_count = cnt;
                best = pair;
            }
        }
        std::string merged = merge_symbols(best.first, best.second);
        if (!have.count(merged)) {
            tokens.push_back(merged);
            have[merged] = true;
        }
        for (auto& seq : seqs) {
            std::vector<std::string> out;
            out.reserve(seq.size());
            size_t i = 0;
            while (i < seq.size()) {
                if (i + 1 < seq.size() && seq[i] == best.first && seq[i + 1] == best.second) {
                    out.push_back(merged);
                    i += 2;
                } else {
                    out.push_back(seq[i]);
                    ++i;
                }
            }
            seq = std::move(out);
        }
    }
    return from_tokens(std::move(tokens), lowercase);
}

Vocab Vocab::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open vocab file: " + path);
    std::vector<std::string> tokens;
    std::string line;
    bool lowercase = true;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
        if (tokens.empty() && line.rfind("#!lowercase=", 0) == 0) {
            lowercase = line.substr(12) != "false";
            continue;
        }
        tokens.push_back(line);
    }
    if (tokens.size() < kNumSpecials) throw ParseError("vocab file too short: " + path);
    for (int i = 0; i < kNumSpecials; ++i)
        if (tokens[static_cast<size_t>(i)] != kSpecialSurfaces[i])
            throw ParseError("vocab file special token mismatch at id " + std::to_string(i));
    return from_tokens(std::move(tokens), lowercase);
}

void Vocab::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write vocab file: " + path);
    out << "#!lowercase=" << (lowercase_ ? "true" : "false") << "\n";
    for (const auto& t : tokens_) out << t << "\n";
}

const std::string& Vocab::token(int id) const {
    if (id < 0 || static_cast<size_t>(id) >= tokens_.size())
        throw ValidationError("token id out of range: " + std::to_string(id));
    return tokens_[static_cast<size_t>(id)];
}

int Vocab::id_of(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? -1 : it->second;
}

std::vector<int> Vocab::split_word(const std::string& word) const {
    auto cps = utf8::decode(word);
    std::vector<int> ids;
    size_t pos = 0;
    bool first = true;
    while (pos < cps.size()) {
        size_t best_len = 0;
        int best_id = -1;
        size_t limit = std::min(cps.size() - pos, max_token_cps_);
        for (size_t len = limit; len >= 1; --len) {
            std::string cand = first ? "" : "##";
            for (size_t k = 0; k < len; ++k) utf8::append(cand, cps[pos + k]);
            int id = id_of(cand);
            if (id >= kNumSpecials) {  // specials are not matchable subwords
                best_len = len;
                best_id = id;
                break;
            }
        }
        if (best_id < 0) return {kUnkId};  // unencodable word collapses to UNK
        ids.push_back(best_id);
        pos += best_len;
        first = false;
    }
    return ids;
}

namespace {

void push_token(TokenSequence& seq, int id, bool special, bool entity, bool cont,
                TokenAlignment align) {
    seq.ids.push_back(id);
    seq.is_special.push_back(special ? 1 : 0);
    seq.is_entity.push_back(entity ? 1 : 0);
    seq.is_continuation.push_back(cont ? 1 : 0);
    seq.alignment.push_back(align);
}

}  // namespace

TokenSequence encode(const std::string& text, const std::vector<EntitySpan>& entities,
                     const Vocab& vocab, size_t max_len) {
    if (max_len < 2) throw ValidationError("max_len must be at least 2");
    validate_spans(text, entities);
    std::vector<EntitySpan> spans = entities;
    std::sort(spans.begin(), spans.end(),
              [](const EntitySpan& a, const EntitySpan& b) { return a.start < b.start; });

    auto cps = utf8::decode(text);

    struct Piece {
        int id;
        bool entity;
        bool cont;
        TokenAlignment align;
    };
    std::vector<Piece> pieces;

    auto add_segment = [&](size_t seg_start, size_t seg_end) {
        size_t i = seg_start;
        while (i < seg_end) {
            if (is_space_cp(cps[i])) {
                ++i;
                continue;
            }
            size_t s = i;
            while (i < seg_end && !is_space_cp(cps[i])) ++i;
            std::string word = utf8::encode(cps, s, i);
            if (vocab.lowercase()) word = lowercase_utf8(word);
            auto ids = vocab.split_word(word);
            // greedy split is re-derived here to recover per-subword extents
            size_t off = s;
            for (size_t k = 0; k < ids.size(); ++k) {
                size_t tok_cps;
                if (ids[k] == kUnkId) {
                    tok_cps = i - s;
                } else {
                    const std::string& t = vocab.token(ids[k]);
                    tok_cps = utf8::length(t.rfind("##", 0) == 0 ? t.substr(2) : t);
                }
                bool cont = ids[k] != kUnkId && vocab.token(ids[k]).rfind("##", 0) == 0;
                pieces.push_back({ids[k], false, cont, {off, off + tok_cps, -1}});
                off += tok_cps;
            }
        }
    };

    size_t pos = 0;
    for (size_t e = 0; e < spans.size(); ++e) {
        add_segment(pos, spans[e].start);
        pieces.push_back({entity_token_id(spans[e].type), true, false,
                          {spans[e].start, spans[e].end, static_cast<int>(e)}});
        pos = spans[e].end;
    }
    add_segment(pos, cps.size());

    TokenSequence seq;
    push_token(seq, kClsId, true, false, false, {0, 0, -1});
    size_t budget = max_len - 2;
    for (size_t k = 0; k < pieces.size() && k < budget; ++k)
        push_token(seq, pieces[k].id, false, pieces[k].entity, pieces[k].cont, pieces[k].align);
    push_token(seq, kSepId, true, false, false, {0, 0, -1});
    while (seq.ids.size() < max_len) push_token(seq, kPadId, true, false, false, {0, 0, -1});
    return seq;
}

std::string decode(const TokenSequence& seq, const Vocab& vocab) {
    std::string out;
    for (size_t i = 0; i < seq.ids.size(); ++i) {
        int id = seq.ids[i];
        if (id == kPadId || id == kClsId || id == kSepId) continue;
        const std::string& tok = vocab.token(id);
        bool cont = seq.is_continuation[i] != 0 && tok.rfind("##", 0) == 0;
        if (cont) {
            out += tok.substr(2);
        } else {
            if (!out.empty()) out += ' ';
            out += tok;
        }
    }
    return out;
}

}  // namespace chmc

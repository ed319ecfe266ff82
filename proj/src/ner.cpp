#include "chmc/ner.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "chmc/errors.hpp"
#include "chmc/utf8.hpp"

namespace chmc {

namespace {

const char* kEntityTypeNames[kNumEntityTypes] = {
    "hashtag", "url",     "person",       "location", "organization",
    "event",   "address", "phone_number", "date",     "number",
};

bool is_word_cp(char32_t c) {
    if (c >= U'a' && c <= U'z') return true;
    if (c >= U'A' && c <= U'Z') return true;
    if (c >= U'0' && c <= U'9') return true;
    if (c == U'_') return true;
    return c >= 0x80;  // non-ASCII treated as word material (tweets are noisy)
}

bool is_digit_cp(char32_t c) { return c >= U'0' && c <= U'9'; }
bool is_space_cp(char32_t c) { return c == U' ' || c == U'\t' || c == U'\n' || c == U'\r'; }

char32_t lower_ascii(char32_t c) { return (c >= U'A' && c <= U'Z') ? c + 32 : c; }

std::string lower_token(const std::vector<char32_t>& cps, size_t s, size_t e) {
    std::string out;
    for (size_t i = s; i < e; ++i) utf8::append(out, lower_ascii(cps[i]));
    return out;
}

struct Token {
    size_t start;
    size_t end;
    std::string lower;
};

std::vector<Token> word_tokens(const std::vector<char32_t>& cps) {
    std::vector<Token> toks;
    size_t i = 0;
    while (i < cps.size()) {
        if (!is_word_cp(cps[i])) {
            ++i;
            continue;
        }
        size_t s = i;
        while (i < cps.size() && is_word_cp(cps[i])) ++i;
        toks.push_back({s, i, lower_token(cps, s, i)});
    }
    return toks;
}

bool match_ci(const std::vector<char32_t>& cps, size_t pos, const char* lit) {
    for (const char* p = lit; *p; ++p, ++pos) {
        if (pos >= cps.size()) return false;
        if (lower_ascii(cps[pos]) != static_cast<char32_t>(*p)) return false;
    }
    return true;
}

// --- pattern scanners; each returns raw candidates -------------------------

void scan_hashtags(const std::vector<char32_t>& cps, std::vector<EntitySpan>& out) {
    for (size_t i = 0; i < cps.size(); ++i) {
        if (cps[i] != U'#') continue;
        size_t j = i + 1;
        while (j < cps.size() && is_word_cp(cps[j])) ++j;
        if (j > i + 1) out.push_back({i, j, EntityType::Hashtag, ""});
        i = j - 1;
    }
}

void scan_urls(const std::vector<char32_t>& cps, std::vector<EntitySpan>& out) {
    for (size_t i = 0; i < cps.size(); ++i) {
        if (i > 0 && !is_space_cp(cps[i - 1])) continue;
        size_t body = 0;
        if (match_ci(cps, i, "http://"))
            body = 7;
        else if (match_ci(cps, i, "https://"))
            body = 8;
        else if (match_ci(cps, i, "www."))
            body = 4;
        else
            continue;
        size_t j = i + body;
        size_t content = j;
        while (j < cps.size() && !is_space_cp(cps[j])) ++j;
        if (j == content) continue;  // bare scheme
        // strip trailing punctuation that usually closes the sentence
        while (j > content) {
            char32_t c = cps[j - 1];
            if (c == U'.' || c == U',' || c == U'!' || c == U'?' || c == U';' || c == U':' ||
                c == U')' || c == U']' || c == U'"' || c == U'\'')
                --j;
            else
                break;
        }
        if (j > content) out.push_back({i, j, EntityType::Url, ""});
        i = j;
    }
}

// digits with optional thousands groups and a single decimal point
void scan_numbers(const std::vector<char32_t>& cps, std::vector<EntitySpan>& out) {
    for (size_t i = 0; i < cps.size(); ++i) {
        if (!is_digit_cp(cps[i])) continue;
        if (i > 0 && is_digit_cp(cps[i - 1])) continue;
        size_t j = i;
        while (j < cps.size() && is_digit_cp(cps[j])) ++j;
        // thousands groups: ,ddd repeated
        while (j + 3 < cps.size() && cps[j] == U',' && is_digit_cp(cps[j + 1]) &&
               is_digit_cp(cps[j + 2]) && is_digit_cp(cps[j + 3]) &&
               (j + 4 >= cps.size() || !is_digit_cp(cps[j + 4]))) {
            j += 4;
        }
        if (j + 1 < cps.size() && cps[j] == U'.' && is_digit_cp(cps[j + 1])) {
            j += 1;
            while (j < cps.size() && is_digit_cp(cps[j])) ++j;
        }
        out.push_back({i, j, EntityType::Number, ""});
        i = j - 1;
    }
}

bool is_phone_sep(char32_t c) {
    return c == U'-' || c == U'.' || c == U'(' || c == U')' || c == U'/';
}

struct NumRun {
    size_t start = 0;
    size_t end = 0;
    size_t digits = 0;
    size_t seps = 0;
};

NumRun digit_sep_run(const std::vector<char32_t>& cps, size_t i) {
    NumRun r;
    r.start = i;
    size_t j = i;
    if (j < cps.size() && cps[j] == U'+') ++j;
    size_t last_digit = j;
    bool any = false;
    while (j < cps.size() && (is_digit_cp(cps[j]) || is_phone_sep(cps[j]))) {
        if (is_digit_cp(cps[j])) {
            ++r.digits;
            any = true;
            last_digit = j + 1;
        } else {
            ++r.seps;
        }
        ++j;
    }
    r.end = any ? last_digit : r.start;  // trim trailing separators
    return r;
}

// numeric date shapes: yyyy[-/]m[-/]d or d[-/]m[-/]yy(yy)
bool looks_like_numeric_date(const std::vector<char32_t>& cps, size_t s, size_t e) {
    std::vector<size_t> group_lens;
    std::vector<char32_t> seps;
    size_t run = 0;
    for (size_t i = s; i < e; ++i) {
        if (is_digit_cp(cps[i])) {
            ++run;
        } else if (cps[i] == U'-' || cps[i] == U'/') {
            if (run == 0) return false;
            group_lens.push_back(run);
            seps.push_back(cps[i]);
            run = 0;
        } else {
            return false;
        }
    }
    if (run == 0) return false;
    group_lens.push_back(run);
    if (group_lens.size() != 3) return false;
    if (seps[0] != seps[1]) return false;
    size_t a = group_lens[0], b = group_lens[1], c = group_lens[2];
    if (a == 4 && b >= 1 && b <= 2 && c >= 1 && c <= 2) return true;
    if (a >= 1 && a <= 2 && b >= 1 && b <= 2 && (c == 2 || c == 4)) return true;
    return false;
}

void scan_phones(const std::vector<char32_t>& cps, std::vector<EntitySpan>& out) {
    for (size_t i = 0; i < cps.size(); ++i) {
        bool starter = is_digit_cp(cps[i]) || cps[i] == U'+' || cps[i] == U'(';
        if (!starter) continue;
        if (i > 0 && (is_digit_cp(cps[i - 1]) || is_phone_sep(cps[i - 1]) || cps[i - 1] == U'+'))
            continue;
        NumRun r = digit_sep_run(cps, i);
        if (r.end <= r.start) continue;
        // phone = digit groups with separators, at least 7 digits; numeric
        // dates are carved out so the date scanner owns them
        if (r.digits >= 7 && r.seps >= 1 && !looks_like_numeric_date(cps, r.start, r.end))
            out.push_back({r.start, r.end, EntityType::PhoneNumber, ""});
        i = r.end > i ? r.end - 1 : i;
    }
}

const char* kMonths[] = {"january", "february", "march",     "april",   "may",      "june",
                         "july",    "august",   "september", "october", "november", "december"};
const char* kMonthAbbr[] = {"jan", "feb", "mar", "apr",  "may", "jun", "jul",
                            "aug", "sep", "sept", "oct", "nov", "dec"};

bool is_month_token(const std::string& lower) {
    for (const char* m : kMonths)
        if (lower == m) return true;
    for (const char* m : kMonthAbbr)
        if (lower == m) return true;
    return false;
}

bool all_digits(const std::string& s, size_t min_len, size_t max_len) {
    if (s.size() < min_len || s.size() > max_len) return false;
    return std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

bool is_day_token(const std::string& s) {
    std::string digits = s;
    for (const char* suf : {"st", "nd", "rd", "th"}) {
        if (digits.size() > 2 && digits.ends_with(suf)) {
            digits = digits.substr(0, digits.size() - 2);
            break;
        }
    }
    if (!all_digits(digits, 1, 2)) return false;
    int v = std::stoi(digits);
    return v >= 1 && v <= 31;
}

void scan_dates(const std::vector<char32_t>& cps, const std::vector<Token>& toks,
                std::vector<EntitySpan>& out) {
    // named-month forms: [day] Month [day][, year] | Month year. A bare
    // month token is not a date ("may", "march" are ordinary words too).
    for (size_t t = 0; t < toks.size(); ++t) {
        if (!is_month_token(toks[t].lower)) continue;
        size_t s = toks[t].start;
        size_t e = toks[t].end;
        size_t consumed = t;
        if (t > 0 && is_day_token(toks[t - 1].lower) && toks[t - 1].end + 1 == s) s = toks[t - 1].start;
        size_t next = t + 1;
        if (next < toks.size() && is_day_token(toks[next].lower) && toks[next].start <= e + 1) {
            e = toks[next].end;
            consumed = next;
            ++next;
        }
        if (next < toks.size() && all_digits(toks[next].lower, 4, 4) &&
            toks[next].start <= e + 2) {  // allows ", 2020"
            e = toks[next].end;
            consumed = next;
        }
        if (s == toks[t].start && e == toks[t].end) continue;
        out.push_back({s, e, EntityType::Date, ""});
        t = consumed;
    }
    // numeric forms
    for (size_t i = 0; i < cps.size(); ++i) {
        if (!is_digit_cp(cps[i])) continue;
        if (i > 0 && (is_digit_cp(cps[i - 1]) || cps[i - 1] == U'-' || cps[i - 1] == U'/')) continue;
        NumRun r = digit_sep_run(cps, i);
        if (r.end > r.start && looks_like_numeric_date(cps, r.start, r.end))
            out.push_back({r.start, r.end, EntityType::Date, ""});
        i = r.end > i ? r.end - 1 : i;
    }
}

void scan_gazetteer(const std::vector<char32_t>& cps, const std::vector<Token>& toks,
                    const Gazetteer& gaz, std::vector<EntitySpan>& out) {
    for (size_t ti = 0; ti < kNumEntityTypes; ++ti) {
        EntityType type = static_cast<EntityType>(ti);
        const auto& entries = gaz.entries(type);
        if (entries.empty()) continue;
        // entry -> lowercase word-token sequence
        std::vector<std::vector<std::string>> entry_toks;
        entry_toks.reserve(entries.size());
        for (const auto& e : entries) {
            auto ecps = utf8::decode(e);
            std::vector<std::string> parts;
            for (const auto& tok : word_tokens(ecps)) parts.push_back(tok.lower);
            entry_toks.push_back(std::move(parts));
        }
        for (size_t t = 0; t < toks.size(); ++t) {
            for (const auto& parts : entry_toks) {
                if (parts.empty() || t + parts.size() > toks.size()) continue;
                bool ok = true;
                for (size_t k = 0; k < parts.size(); ++k) {
                    if (toks[t + k].lower != parts[k]) {
                        ok = false;
                        break;
                    }
                }
                if (ok) out.push_back({toks[t].start, toks[t + parts.size() - 1].end, type, ""});
            }
        }
    }
}

}  // namespace

const char* entity_type_name(EntityType t) { return kEntityTypeNames[static_cast<size_t>(t)]; }

EntityType entity_type_from_name(const std::string& name) {
    for (size_t i = 0; i < kNumEntityTypes; ++i)
        if (name == kEntityTypeNames[i]) return static_cast<EntityType>(i);
    throw ValidationError("unknown entity type: " + name);
}

void Gazetteer::add(EntityType type, const std::string& surface) {
    if (surface.empty()) return;
    auto& seen = seen_[static_cast<size_t>(type)];
    std::string key;
    for (char c : surface) key.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c + 32) : c);
    if (seen.count(key)) return;
    seen[key] = true;
    entries_[static_cast<size_t>(type)].push_back(surface);
}

Gazetteer Gazetteer::load_dir(const std::string& dir) {
    Gazetteer g;
    for (size_t i = 0; i < kNumEntityTypes; ++i) {
        std::filesystem::path p = std::filesystem::path(dir) / (std::string(kEntityTypeNames[i]) + ".txt");
        std::ifstream in(p);
        if (!in) continue;
        std::string line;
        while (std::getline(in, line)) {
            while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
            if (!line.empty()) g.add(static_cast<EntityType>(i), line);
        }
    }
    return g;
}

const std::vector<std::string>& Gazetteer::entries(EntityType type) const {
    return entries_[static_cast<size_t>(type)];
}

bool Gazetteer::empty() const {
    for (const auto& e : entries_)
        if (!e.empty()) return false;
    return true;
}

std::vector<EntitySpan> resolve_overlaps(std::vector<EntitySpan> spans) {
    std::vector<EntitySpan> order = std::move(spans);
    std::sort(order.begin(), order.end(), [](const EntitySpan& a, const EntitySpan& b) {
        size_t la = a.end - a.start, lb = b.end - b.start;
        if (la != lb) return la > lb;
        if (a.start != b.start) return a.start < b.start;
        return a.type < b.type;
    });
    std::vector<EntitySpan> kept;
    for (const auto& s : order) {
        bool overlaps = false;
        for (const auto& k : kept) {
            if (s.start < k.end && k.start < s.end) {
                overlaps = true;
                break;
            }
        }
        if (!overlaps) kept.push_back(s);
    }
    std::sort(kept.begin(), kept.end(),
              [](const EntitySpan& a, const EntitySpan& b) { return a.start < b.start; });
    return kept;
}

std::vector<EntitySpan> annotate(const std::string& text, const Gazetteer& gazetteer) {
    auto cps = utf8::decode(text);
    if (cps.empty()) return {};
    auto toks = word_tokens(cps);
    std::vector<EntitySpan> cand;
    scan_urls(cps, cand);
    scan_hashtags(cps, cand);
    scan_phones(cps, cand);
    scan_dates(cps, toks, cand);
    scan_numbers(cps, cand);
    scan_gazetteer(cps, toks, gazetteer, cand);
    auto spans = resolve_overlaps(std::move(cand));
    for (auto& s : spans) s.surface = utf8::encode(cps, s.start, s.end);
    return spans;
}

NerScore strict_ner_f1(const std::vector<std::vector<EntitySpan>>& gold,
                       const std::vector<std::vector<EntitySpan>>& pred) {
    if (gold.size() != pred.size())
        throw ValidationError("strict_ner_f1: gold and pred document counts differ");
    NerScore s;
    for (size_t d = 0; d < gold.size(); ++d) {
        std::vector<bool> used(gold[d].size(), false);
        s.gold_count += gold[d].size();
        s.pred_count += pred[d].size();
        for (const auto& p : pred[d]) {
            for (size_t g = 0; g < gold[d].size(); ++g) {
                if (used[g]) continue;
                if (gold[d][g].start == p.start && gold[d][g].end == p.end &&
                    gold[d][g].type == p.type) {
                    used[g] = true;
                    ++s.true_positives;
                    break;
                }
            }
        }
    }
    s.precision = s.pred_count ? static_cast<double>(s.true_positives) / static_cast<double>(s.pred_count) : 0.0;
    s.recall = s.gold_count ? static_cast<double>(s.true_positives) / static_cast<double>(s.gold_count) : 0.0;
    s.f1 = (s.precision + s.recall) > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    return s;
}

void validate_spans(const std::string& text, const std::vector<EntitySpan>& spans) {
    if (spans.empty()) return;
    auto cps = utf8::decode(text);
    std::vector<EntitySpan> sorted = spans;
    std::sort(sorted.begin(), sorted.end(),
              [](const EntitySpan& a, const EntitySpan& b) { return a.start < b.start; });
    size_t prev_end = 0;
    for (const auto& s : sorted) {
        if (!(s.start < s.end) || s.end > cps.size())
            throw ValidationError("entity span out of bounds: [" + std::to_string(s.start) + "," +
                                  std::to_string(s.end) + ") in text of length " +
                                  std::to_string(cps.size()));
        if (s.start < prev_end) throw ValidationError("overlapping entity spans");
        prev_end = s.end;
        std::string slice = utf8::encode(cps, s.start, s.end);
        if (!s.surface.empty() && slice != s.surface)
            throw ValidationError("entity surface mismatch: expected \"" + slice + "\" got \"" +
                                  s.surface + "\"");
    }
}

}  // namespace chmc

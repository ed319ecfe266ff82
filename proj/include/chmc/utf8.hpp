#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "chmc/errors.hpp"

namespace chmc::utf8 {

// Decodes UTF-8 into Unicode scalar values. Throws ParseError on invalid
// sequences. All span offsets in the project count scalar values, so this
// is the single place byte-level decoding happens.
inline std::vector<char32_t> decode(std::string_view s) {
    std::vector<char32_t> out;
    out.reserve(s.size());
    size_t i = 0;
    while (i < s.size()) {
        unsigned char c = static_cast<unsigned char>(s[i]);
        char32_t cp = 0;
        size_t len = 0;
        if (c < 0x80) {
            cp = c;
            len = 1;
        } else if ((c & 0xE0) == 0xC0) {
            cp = c & 0x1F;
            len = 2;
        } else if ((c & 0xF0) == 0xE0) {
            cp = c & 0x0F;
            len = 3;
        } else if ((c & 0xF8) == 0xF0) {
            cp = c & 0x07;
            len = 4;
        } else {
            throw ParseError("invalid UTF-8 lead byte at offset " + std::to_string(i));
        }
        if (i + len > s.size()) throw ParseError("truncated UTF-8 sequence at offset " + std::to_string(i));
        for (size_t k = 1; k < len; ++k) {
            unsigned char cc = static_cast<unsigned char>(s[i + k]);
            if ((cc & 0xC0) != 0x80)
                throw ParseError("invalid UTF-8 continuation byte at offset " + std::to_string(i + k));
            cp = (cp << 6) | (cc & 0x3F);
        }
        if (len == 2 && cp < 0x80) throw ParseError("overlong UTF-8 sequence");
        if (len == 3 && cp < 0x800) throw ParseError("overlong UTF-8 sequence");
        if (len == 4 && cp < 0x10000) throw ParseError("overlong UTF-8 sequence");
        if (cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) throw ParseError("invalid Unicode scalar value");
        out.push_back(cp);
        i += len;
    }
    return out;
}

inline void append(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

inline std::string encode(const std::vector<char32_t>& cps, size_t start, size_t end) {
    std::string out;
    for (size_t i = start; i < end && i < cps.size(); ++i) append(out, cps[i]);
    return out;
}

inline std::string encode(const std::vector<char32_t>& cps) { return encode(cps, 0, cps.size()); }

inline size_t length(std::string_view s) { return decode(s).size(); }

// Slice [start, end) in scalar-value offsets.
inline std::string substr(std::string_view s, size_t start, size_t end) {
    return encode(decode(s), start, end);
}

}  // namespace chmc::utf8

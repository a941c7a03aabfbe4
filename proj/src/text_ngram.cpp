#include "dat/text_ngram.hpp"

#include <array>
#include <stdexcept>

namespace dat {

namespace {

constexpr char kKeySep = '\x1f';

// Letter and digit ranges for the scripts this pipeline meets in practice:
// Latin (with diacritics), Greek, Cyrillic, Armenian, Hebrew, Arabic (covers
// Pashto), Devanagari (covers Nepali), Bengali, Thai, Khmer, Georgian,
// Hangul, kana and CJK, plus fullwidth forms. Dependent vowel signs and
// virama of the Indic and Khmer blocks count as word characters so words
// do not shatter at combining marks. Sentence punctuation (danda, Arabic
// full stop, khan) is deliberately outside every range.
struct CpRange {
    char32_t lo, hi;
};

constexpr std::array<CpRange, 40> kAlnumRanges{{
    {0x0030, 0x0039},  // 0-9
    {0x0041, 0x005A},  // A-Z
    {0x0061, 0x007A},  // a-z
    {0x00AA, 0x00AA},
    {0x00B5, 0x00B5},
    {0x00BA, 0x00BA},
    {0x00C0, 0x00D6},
    {0x00D8, 0x00F6},
    {0x00F8, 0x00FF},
    {0x0100, 0x02AF},  // Latin Extended-A/B, IPA
    {0x0386, 0x0386},
    {0x0388, 0x03FF},  // Greek
    {0x0400, 0x052F},  // Cyrillic + supplement
    {0x0531, 0x0556},  // Armenian upper
    {0x0561, 0x0587},  // Armenian lower
    {0x05D0, 0x05EA},  // Hebrew
    {0x0620, 0x064A},  // Arabic letters
    {0x0660, 0x0669},  // Arabic-Indic digits
    {0x066E, 0x06D3},  // Arabic extended letters (Pashto, Persian)
    {0x06D5, 0x06D5},
    {0x06F0, 0x06F9},  // extended Arabic-Indic digits
    {0x06FA, 0x06FF},
    {0x0750, 0x077F},  // Arabic supplement
    {0x0900, 0x0963},  // Devanagari letters, signs, virama
    {0x0966, 0x096F},  // Devanagari digits
    {0x0971, 0x097F},
    {0x0980, 0x09E3},  // Bengali
    {0x09E6, 0x09EF},
    {0x0E01, 0x0E3A},  // Thai
    {0x0E40, 0x0E4E},
    {0x0E50, 0x0E59},
    {0x10A0, 0x10C5},  // Georgian
    {0x10D0, 0x10FA},
    {0x1100, 0x11FF},  // Hangul jamo
    {0x1780, 0x17D3},  // Khmer letters, vowels, signs
    {0x17E0, 0x17E9},  // Khmer digits
    {0x3041, 0x30FA},  // kana (excludes CJK punctuation at 0x3000-0x303F)
    {0x3400, 0x9FFF},  // CJK ext A + unified
    {0xAC00, 0xD7A3},  // Hangul syllables
    {0xFF10, 0xFF5A},  // fullwidth digits/letters (letters only via lower())
}};

bool is_word_cp(char32_t cp) {
    for (const auto& r : kAlnumRanges) {
        if (cp < r.lo) return false;  // ranges sorted ascending
        if (cp <= r.hi) {
            // Fullwidth block: only digits and letters, not punctuation.
            if (r.lo == 0xFF10) {
                return (cp <= 0xFF19) || (cp >= 0xFF21 && cp <= 0xFF3A) ||
                       (cp >= 0xFF41 && cp <= 0xFF5A);
            }
            return true;
        }
    }
    return false;
}

char32_t lower_cp(char32_t cp) {
    if (cp >= 'A' && cp <= 'Z') return cp + 0x20;
    if (cp < 0x80) return cp;
    if ((cp >= 0x00C0 && cp <= 0x00D6) || (cp >= 0x00D8 && cp <= 0x00DE)) return cp + 0x20;
    // Latin Extended-A pairs upper/lower alternating.
    if (cp >= 0x0100 && cp <= 0x0137) return (cp % 2 == 0) ? cp + 1 : cp;
    if (cp >= 0x0139 && cp <= 0x0148) return (cp % 2 == 1) ? cp + 1 : cp;
    if (cp >= 0x014A && cp <= 0x0177) return (cp % 2 == 0) ? cp + 1 : cp;
    if (cp == 0x0178) return 0x00FF;
    if (cp >= 0x0179 && cp <= 0x017E) return (cp % 2 == 1) ? cp + 1 : cp;
    if (cp == 0x0386) return 0x03AC;
    if (cp >= 0x0388 && cp <= 0x038A) return cp + 0x25;
    if (cp == 0x038C) return 0x03CC;
    if (cp == 0x038E || cp == 0x038F) return cp + 0x3F;
    if ((cp >= 0x0391 && cp <= 0x03A1) || (cp >= 0x03A3 && cp <= 0x03AB)) return cp + 0x20;
    if (cp >= 0x0400 && cp <= 0x040F) return cp + 0x50;
    if (cp >= 0x0410 && cp <= 0x042F) return cp + 0x20;
    if (cp >= 0x0531 && cp <= 0x0556) return cp + 0x30;
    if (cp >= 0xFF21 && cp <= 0xFF3A) return cp + 0x20;
    return cp;
}

// Decodes one UTF-8 code point starting at `i`; advances `i` past it.
// Malformed bytes decode as U+FFFD one byte at a time, which the word
// classifier treats as a separator.
char32_t decode_utf8(std::string_view s, std::size_t& i) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    if (b0 < 0x80) {
        ++i;
        return b0;
    }
    int len = 0;
    char32_t cp = 0;
    if ((b0 & 0xE0) == 0xC0) {
        len = 2;
        cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        len = 3;
        cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        len = 4;
        cp = b0 & 0x07;
    } else {
        ++i;
        return 0xFFFD;
    }
    if (i + len > s.size()) {
        ++i;
        return 0xFFFD;
    }
    for (int j = 1; j < len; ++j) {
        const auto b = static_cast<unsigned char>(s[i + j]);
        if ((b & 0xC0) != 0x80) {
            ++i;
            return 0xFFFD;
        }
        cp = (cp << 6) | (b & 0x3F);
    }
    // Reject overlong encodings and surrogates.
    if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000) ||
        (cp >= 0xD800 && cp <= 0xDFFF) || cp > 0x10FFFF) {
        ++i;
        return 0xFFFD;
    }
    i += len;
    return cp;
}

void encode_utf8(char32_t cp, std::string& out) {
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

}  // namespace

TokenSequence tokenize(std::string_view text) {
    TokenSequence tokens;
    std::string current;
    std::size_t i = 0;
    while (i < text.size()) {
        const char32_t cp = decode_utf8(text, i);
        if (is_word_cp(cp)) {
            encode_utf8(lower_cp(cp), current);
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

std::string join_tokens(const TokenSequence& tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i > 0) out.push_back(' ');
        out += tokens[i];
    }
    return out;
}

NGramProfile::NGramProfile(const TokenSequence& seq, int order) : order_(order) {
    if (order < kMinOrder || order > kMaxOrder) {
        throw std::invalid_argument("n-gram order must be in 1..4, got " + std::to_string(order));
    }
    if (seq.size() < static_cast<std::size_t>(order)) return;
    const std::size_t windows = seq.size() - static_cast<std::size_t>(order) + 1;
    counts_.reserve(windows);
    for (std::size_t i = 0; i < windows; ++i) {
        ++counts_[make_key(seq, i, order)];
    }
    total_ = static_cast<long>(windows);
}

std::string NGramProfile::make_key(const TokenSequence& seq, std::size_t begin, int order) {
    std::string key = seq[begin];
    for (int j = 1; j < order; ++j) {
        key.push_back(kKeySep);
        key += seq[begin + static_cast<std::size_t>(j)];
    }
    return key;
}

TokenSequence NGramProfile::split_key(const std::string& key) {
    TokenSequence parts;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= key.size(); ++i) {
        if (i == key.size() || key[i] == kKeySep) {
            parts.push_back(key.substr(start, i - start));
            start = i + 1;
        }
    }
    return parts;
}

ProfileSet::ProfileSet(TokenSequence seq) : tokens_(std::move(seq)) {
    for (int n = NGramProfile::kMinOrder; n <= NGramProfile::kMaxOrder; ++n) {
        profiles_[n - 1] = NGramProfile(tokens_, n);
    }
}

const NGramProfile& ProfileSet::order(int n) const {
    if (n < NGramProfile::kMinOrder || n > NGramProfile::kMaxOrder) {
        throw std::invalid_argument("n-gram order must be in 1..4, got " + std::to_string(n));
    }
    return profiles_[n - 1];
}

double recall_n(const NGramProfile& q, const NGramProfile& x) {
    if (q.order() != x.order()) {
        throw std::invalid_argument("recall_n: profiles have different orders");
    }
    if (q.total() == 0) return 0.0;
    long matched = 0;
    const auto& xc = x.counts();
    for (const auto& [key, count] : q.counts()) {
        const auto it = xc.find(key);
        if (it != xc.end()) matched += std::min(count, it->second);
    }
    return static_cast<double>(matched) / static_cast<double>(q.total());
}

double recall_n(const TokenSequence& q, const TokenSequence& x, int n) {
    return recall_n(NGramProfile(q, n), NGramProfile(x, n));
}

double alpha(const ProfileSet& q, const ProfileSet& x) {
    double sum = 0.0;
    for (int n = NGramProfile::kMinOrder; n <= NGramProfile::kMaxOrder; ++n) {
        sum += recall_n(q.order(n), x.order(n));
    }
    return sum / 4.0;
}

double alpha(const TokenSequence& q, const TokenSequence& x) {
    return alpha(ProfileSet(q), ProfileSet(x));
}

}  // namespace dat

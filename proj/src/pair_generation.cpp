#include "dat/pair_generation.hpp"

#include <cctype>
#include <unordered_set>

#include "dat/errors.hpp"

namespace dat {

namespace {

std::string trim(std::string_view s) {
    std::size_t begin = 0;
    std::size_t end = s.size();
    while (begin < end && std::isspace(static_cast<unsigned char>(s[begin]))) ++begin;
    while (end > begin && std::isspace(static_cast<unsigned char>(s[end - 1]))) --end;
    return std::string(s.substr(begin, end - begin));
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= text.size(); ++i) {
        if (i == text.size() || text[i] == '\n') {
            lines.push_back(text.substr(start, i - start));
            start = i + 1;
        }
    }
    return lines;
}

// Unwraps "1. text", "2) text", "3: text", "- text", "* text", "• text".
// Returns true and the unwrapped remainder when the line carried a marker.
bool strip_list_marker(const std::string& line, std::string& rest) {
    std::size_t i = 0;
    if (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) {
        while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
        if (i < line.size() &&
            (line[i] == '.' || line[i] == ')' || line[i] == ':' || line[i] == ']')) {
            rest = trim(line.substr(i + 1));
            return true;
        }
        return false;
    }
    if (!line.empty() && (line[0] == '-' || line[0] == '*')) {
        if (line.size() > 1 && std::isspace(static_cast<unsigned char>(line[1]))) {
            rest = trim(line.substr(1));
            return true;
        }
        return false;
    }
    if (line.rfind("\xE2\x80\xA2", 0) == 0) {  // bullet sign
        rest = trim(line.substr(3));
        return true;
    }
    return false;
}

std::string strip_surrounding_quotes(std::string s) {
    struct QuotePair {
        const char* open;
        const char* close;
    };
    static const QuotePair kPairs[] = {
        {"\"", "\""},
        {"'", "'"},
        {"\xE2\x80\x9C", "\xE2\x80\x9D"},  // curly double
        {"\xE2\x80\x98", "\xE2\x80\x99"},  // curly single
        {"\xC2\xAB", "\xC2\xBB"},          // guillemets
    };
    for (const auto& p : kPairs) {
        const std::size_t open_len = std::char_traits<char>::length(p.open);
        const std::size_t close_len = std::char_traits<char>::length(p.close);
        if (s.size() >= open_len + close_len && s.rfind(p.open, 0) == 0 &&
            s.compare(s.size() - close_len, close_len, p.close) == 0) {
            return trim(s.substr(open_len, s.size() - open_len - close_len));
        }
    }
    return s;
}

std::string first_nonempty_line(const std::string& text) {
    for (const auto& line : split_lines(text)) {
        std::string t = trim(line);
        if (!t.empty()) return t;
    }
    return {};
}

std::vector<ChatMessage> user_message(std::string prompt) {
    return {{"user", std::move(prompt)}};
}

}  // namespace

const char* provenance_name(Provenance p) {
    switch (p) {
        case Provenance::generated: return "generated";
        case Provenance::fixed: return "fixed";
        case Provenance::pooled: return "pooled";
    }
    return "generated";
}

Provenance provenance_from_name(const std::string& name) {
    if (name == "fixed") return Provenance::fixed;
    if (name == "pooled") return Provenance::pooled;
    return Provenance::generated;
}

std::vector<std::string> parse_candidate_lines(const std::string& response) {
    const auto raw_lines = split_lines(response);

    bool any_marked = false;
    std::vector<std::pair<bool, std::string>> prepared;  // (marked, text)
    prepared.reserve(raw_lines.size());
    for (const auto& raw : raw_lines) {
        const std::string line = trim(raw);
        if (line.empty()) continue;
        std::string rest;
        if (strip_list_marker(line, rest)) {
            any_marked = true;
            prepared.emplace_back(true, std::move(rest));
        } else {
            prepared.emplace_back(false, line);
        }
    }

    std::vector<std::string> out;
    for (auto& [marked, text] : prepared) {
        if (any_marked && !marked) continue;  // skip preamble around a list
        std::string cleaned = strip_surrounding_quotes(std::move(text));
        if (!cleaned.empty()) out.push_back(std::move(cleaned));
    }
    return out;
}

std::string render_demonstrations(std::span<const DemonstrationPair> pairs,
                                  const LangPair& langs) {
    if (pairs.empty()) return {};
    std::string out;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        out += "Example " + std::to_string(i + 1) + ":\n";
        out += langs.source + ": " + pairs[i].source + "\n";
        out += langs.target + ": " + pairs[i].target + "\n\n";
    }
    return out;
}

std::vector<CandidateSource> generate_sources(const GenerationContext& ctx,
                                              const std::string& query, int m,
                                              std::uint64_t* calls_out) {
    if (m < 1) throw ConfigError("generate_sources: m must be >= 1");

    const std::string prompt =
        render_template(ctx.templates.get(TemplateRole::source_generation),
                        {{"query", query},
                         {"m", std::to_string(m)},
                         {"source_lang", ctx.langs.source},
                         {"target_lang", ctx.langs.target}});

    std::vector<std::string> parsed;
    std::string raw;
    for (int attempt = 0; attempt < 2; ++attempt) {
        const ChatExchange exchange = ctx.gateway.complete(user_message(prompt), ctx.params);
        if (calls_out != nullptr) ++*calls_out;
        raw = exchange.response_text;
        parsed = parse_candidate_lines(raw);
        if (!parsed.empty()) break;
    }
    if (parsed.empty()) {
        throw GenerationError("generate_sources: no parseable candidates after retry", raw);
    }

    const std::string query_key = join_tokens(tokenize(query));
    std::unordered_set<std::string> seen;
    std::vector<CandidateSource> candidates;
    for (std::size_t origin = 0; origin < parsed.size(); ++origin) {
        CandidateSource cand;
        cand.text = parsed[origin];
        cand.tokens = tokenize(cand.text);
        cand.origin_index = origin;
        const std::string key = join_tokens(cand.tokens);
        if (key.empty()) continue;       // punctuation-only line, unusable
        if (key == query_key) continue;  // a copy of the query is not an example
        if (!seen.insert(key).second) continue;
        candidates.push_back(std::move(cand));
    }
    return candidates;
}

DemonstrationPair translate_source(const GenerationContext& ctx, const std::string& source,
                                   std::span<const DemonstrationPair> fixed_pairs,
                                   std::uint64_t* calls_out) {
    if (trim(source).empty()) {
        throw ConfigError("translate_source: source sentence is empty");
    }

    const std::string prompt =
        render_template(ctx.templates.get(TemplateRole::target_translation),
                        {{"source", source},
                         {"source_lang", ctx.langs.source},
                         {"target_lang", ctx.langs.target},
                         {"demonstrations", render_demonstrations(fixed_pairs, ctx.langs)}});

    for (int attempt = 0; attempt < 2; ++attempt) {
        const ChatExchange exchange = ctx.gateway.complete(user_message(prompt), ctx.params);
        if (calls_out != nullptr) ++*calls_out;
        const std::string target = first_nonempty_line(exchange.response_text);
        if (!target.empty()) {
            return DemonstrationPair{source, target, Provenance::generated};
        }
    }
    throw GenerationError("translate_source: empty translation after retry for source: " + source,
                          source);
}

DemonstrationBuild build_demonstrations(const GenerationContext& ctx, const std::string& query,
                                        const FilterConfig& filter,
                                        std::span<const DemonstrationPair> fixed_pairs) {
    filter.validate();
    DemonstrationBuild build;
    build.candidates = generate_sources(ctx, query, filter.m, &build.generation_calls);

    const auto want = static_cast<std::size_t>(filter.k);
    if (filter.filtering_disabled()) {
        // No-filtering configuration: keep generation order.
        build.trace.bypassed = true;
        const std::size_t take = std::min(want, build.candidates.size());
        for (std::size_t i = 0; i < take; ++i) build.trace.selected.push_back(i);
        build.trace.shortfall = take < want;
    } else {
        std::vector<TokenSequence> token_lists;
        token_lists.reserve(build.candidates.size());
        for (const auto& c : build.candidates) token_lists.push_back(c.tokens);
        build.trace = mmr_select(tokenize(query), token_lists, filter);
    }

    build.pairs.reserve(build.trace.selected.size());
    for (const std::size_t idx : build.trace.selected) {
        build.pairs.push_back(translate_source(ctx, build.candidates[idx].text, fixed_pairs,
                                               &build.translation_calls));
    }
    return build;
}

}  // namespace dat

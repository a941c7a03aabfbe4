#pragma once

#include <span>
#include <string>
#include <vector>

#include "dat/llm_gateway.hpp"
#include "dat/mmr_filter.hpp"
#include "dat/prompt_template.hpp"
#include "dat/text_ngram.hpp"

namespace dat {

struct LangPair {
    std::string source = "English";
    std::string target;
};

// A source-side sentence proposed by the model, before filtering.
struct CandidateSource {
    std::string text;
    TokenSequence tokens;
    std::size_t origin_index = 0;  // position in the generated list, post-dedup order preserved
};

enum class Provenance { generated, fixed, pooled };

const char* provenance_name(Provenance p);
Provenance provenance_from_name(const std::string& name);

// One in-context example: a source sentence and its translation.
struct DemonstrationPair {
    std::string source;
    std::string target;
    Provenance provenance = Provenance::generated;

    bool operator==(const DemonstrationPair&) const = default;
};

// Shared handles for the generation steps of one run.
struct GenerationContext {
    ChatGateway& gateway;
    const TemplateLibrary& templates;
    LangPair langs;
    GenerationParams params;
};

// Splits a model response into candidate sentences. Lines carrying a list
// marker ("1.", "2)", "-", "*", the bullet sign) are unwrapped; when no line
// carries a marker every non-empty line counts. Surrounding quotes are
// stripped. Re-parsing the joined output of a parse is the identity.
std::vector<std::string> parse_candidate_lines(const std::string& response);

// Renders the numbered example blocks placed before a translation request.
// Empty input renders as an empty string (zero-shot prompt shape).
std::string render_demonstrations(std::span<const DemonstrationPair> pairs,
                                  const LangPair& langs);

// Asks the model for `m` source-language sentences relevant to the query yet
// mutually distinct, then parses, deduplicates (by normalized tokens) and
// drops any candidate token-identical to the query. Retries the call once if
// nothing parses; a second empty parse raises GenerationError carrying the
// raw response. `calls_out`, when given, accumulates calls issued.
std::vector<CandidateSource> generate_sources(const GenerationContext& ctx,
                                              const std::string& query, int m,
                                              std::uint64_t* calls_out = nullptr);

// Translates one source sentence. `fixed_pairs`, when present, are prepended
// as in-context examples. The first non-empty response line becomes the
// target. Retries once on an effectively empty translation.
DemonstrationPair translate_source(const GenerationContext& ctx, const std::string& source,
                                   std::span<const DemonstrationPair> fixed_pairs = {},
                                   std::uint64_t* calls_out = nullptr);

struct DemonstrationBuild {
    std::vector<DemonstrationPair> pairs;  // in selection order
    SelectionTrace trace;
    std::vector<CandidateSource> candidates;
    std::uint64_t generation_calls = 0;   // nominally 1
    std::uint64_t translation_calls = 0;  // nominally |pairs|
};

// Full source-side flow for one query: generate m candidates, keep k via MMR
// (or, when m == k, keep the first k parsed candidates in generation order),
// translate each kept source. Returns fewer than k pairs when deduplication
// leaves fewer usable candidates; the trace records the shortfall.
DemonstrationBuild build_demonstrations(const GenerationContext& ctx, const std::string& query,
                                        const FilterConfig& filter,
                                        std::span<const DemonstrationPair> fixed_pairs = {});

}  // namespace dat

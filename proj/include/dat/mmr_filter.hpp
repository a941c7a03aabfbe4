#pragma once

#include <cstddef>
#include <vector>

#include "dat/text_ngram.hpp"

namespace dat {

// Candidate generation and filtering knobs: generate m, keep k, weight the
// redundancy penalty by lambda. m == k disables filtering downstream.
struct FilterConfig {
    int m = 10;
    int k = 4;
    double lambda = 1.0;

    // Throws ConfigError on violation (k < 1, k > m, lambda < 0).
    void validate() const;
    bool filtering_disabled() const { return m == k; }
};

struct SelectionStep {
    double relevance = 0.0;  // alpha(query, chosen)
    double diversity = 0.0;  // -(1/|selected|) * sum of alpha(prior, chosen); 0 on first pick
    double objective = 0.0;  // relevance + lambda * diversity
};

struct SelectionTrace {
    std::vector<std::size_t> selected;      // candidate indices in pick order
    std::vector<SelectionStep> step_scores;  // one entry per pick
    bool shortfall = false;                  // fewer candidates than k
    bool bypassed = false;                   // m == k, no filtering ran
};

// Greedy relevant-yet-diverse selection. Each step picks the remaining
// candidate maximizing alpha(query, x) + lambda * diversity(x), where the
// diversity term is the negated mean alpha of already-selected sources
// against x (zero while nothing is selected, so the first pick is a pure
// relevance argmax for every lambda). Exact score ties break toward the
// lowest candidate index. Stops after k picks or when candidates run out,
// whichever comes first.
//
// Throws std::invalid_argument when `candidates` is empty.
SelectionTrace mmr_select(const TokenSequence& query,
                          const std::vector<TokenSequence>& candidates,
                          const FilterConfig& config);

// Index of the pure relevance argmax, which is what mmr_select picks
// first under any lambda. Diagnostic accessor.
std::size_t first_pick(const TokenSequence& query,
                       const std::vector<TokenSequence>& candidates);

}  // namespace dat

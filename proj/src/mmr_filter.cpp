#include "dat/mmr_filter.hpp"

#include <stdexcept>
#include <string>

#include "dat/errors.hpp"

namespace dat {

void FilterConfig::validate() const {
    if (m < 1) throw ConfigError("filter: m must be >= 1, got " + std::to_string(m));
    if (k < 1) throw ConfigError("filter: k must be >= 1, got " + std::to_string(k));
    if (k > m) {
        throw ConfigError("filter: k must not exceed m (k=" + std::to_string(k) +
                          ", m=" + std::to_string(m) + ")");
    }
    if (lambda < 0.0) {
        throw ConfigError("filter: lambda must be >= 0, got " + std::to_string(lambda));
    }
}

SelectionTrace mmr_select(const TokenSequence& query,
                          const std::vector<TokenSequence>& candidates,
                          const FilterConfig& config) {
    config.validate();
    if (candidates.empty()) {
        throw std::invalid_argument("mmr_select: no candidates to filter");
    }

    ProfileSet query_profiles(query);
    std::vector<ProfileSet> cand_profiles;
    cand_profiles.reserve(candidates.size());
    for (const auto& c : candidates) cand_profiles.emplace_back(c);

    // alpha(query, x_i), fixed across iterations.
    std::vector<double> relevance(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        relevance[i] = alpha(query_profiles, cand_profiles[i]);
    }

    SelectionTrace trace;
    std::vector<bool> taken(candidates.size(), false);
    // Running sum of alpha(x_j, x_i) over selected j, per remaining i.
    std::vector<double> redundancy(candidates.size(), 0.0);

    const auto want = static_cast<std::size_t>(config.k);
    while (trace.selected.size() < want && trace.selected.size() < candidates.size()) {
        const double inv_selected =
            trace.selected.empty() ? 0.0 : 1.0 / static_cast<double>(trace.selected.size());
        std::size_t best = candidates.size();
        SelectionStep best_step;
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            if (taken[i]) continue;
            SelectionStep step;
            step.relevance = relevance[i];
            step.diversity = trace.selected.empty() ? 0.0 : -inv_selected * redundancy[i];
            step.objective = step.relevance + config.lambda * step.diversity;
            if (best == candidates.size() || step.objective > best_step.objective) {
                best = i;
                best_step = step;
            }
        }
        taken[best] = true;
        trace.selected.push_back(best);
        trace.step_scores.push_back(best_step);
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            if (!taken[i]) redundancy[i] += alpha(cand_profiles[best], cand_profiles[i]);
        }
    }

    trace.shortfall = trace.selected.size() < want;
    return trace;
}

std::size_t first_pick(const TokenSequence& query,
                       const std::vector<TokenSequence>& candidates) {
    if (candidates.empty()) {
        throw std::invalid_argument("mmr_select: no candidates to filter");
    }
    FilterConfig config;
    config.m = static_cast<int>(candidates.size());
    config.k = 1;
    config.lambda = 0.0;
    return mmr_select(query, candidates, config).selected.front();
}

}  // namespace dat

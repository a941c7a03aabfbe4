#include "dat/mmr_filter.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "dat/errors.hpp"
#include "doctest.h"
#include "oracles.hpp"
#include "test_util.hpp"

using dat::FilterConfig;
using dat::TokenSequence;

namespace {

FilterConfig make_config(int m, int k, double lambda) {
    FilterConfig config;
    config.m = m;
    config.k = k;
    config.lambda = lambda;
    return config;
}

std::vector<TokenSequence> random_candidates(std::mt19937& rng, int max_count) {
    std::uniform_int_distribution<int> count_dist(1, max_count);
    const int count = count_dist(rng);
    std::vector<TokenSequence> candidates;
    candidates.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) candidates.push_back(testutil::random_sequence(rng, 10));
    return candidates;
}

}  // namespace

TEST_CASE("FilterConfig validation") {
    CHECK_THROWS_AS(make_config(4, 5, 1.0).validate(), dat::ConfigError);
    CHECK_THROWS_AS(make_config(4, 0, 1.0).validate(), dat::ConfigError);
    CHECK_THROWS_AS(make_config(0, 0, 1.0).validate(), dat::ConfigError);
    CHECK_THROWS_AS(make_config(4, 2, -0.1).validate(), dat::ConfigError);
    CHECK_NOTHROW(make_config(10, 4, 0.0).validate());
    CHECK(make_config(4, 4, 1.0).filtering_disabled());
    CHECK_FALSE(make_config(10, 4, 1.0).filtering_disabled());
}

TEST_CASE("empty candidate list is rejected") {
    CHECK_THROWS_WITH_AS(dat::mmr_select({"a"}, {}, make_config(4, 2, 1.0)),
                         "mmr_select: no candidates to filter", std::invalid_argument);
    CHECK_THROWS_AS(dat::first_pick({"a"}, {}), std::invalid_argument);
}

TEST_CASE("lambda zero reduces to top-k relevance") {
    const TokenSequence query{"a", "b", "c", "d"};
    const std::vector<TokenSequence> candidates{
        {"x", "y"},                // alpha 0
        {"a", "b", "c", "d"},      // alpha 1
        {"a", "b"},                // partial
        {"a", "b", "c", "x"},      // partial, higher
    };
    const auto trace = dat::mmr_select(query, candidates, make_config(4, 3, 0.0));
    CHECK(trace.selected == std::vector<std::size_t>{1, 3, 2});
    CHECK_FALSE(trace.shortfall);
    CHECK(trace.step_scores.front().diversity == 0.0);
    for (const auto& step : trace.step_scores) {
        // The diversity term is still reported; lambda zeroes its weight.
        CHECK(step.objective == step.relevance);
    }
}

TEST_CASE("first pick ignores diversity entirely") {
    const TokenSequence query{"a", "b", "c", "d"};
    const std::vector<TokenSequence> candidates{query, {"x", "y", "z"}};
    for (const double lambda : {0.0, 0.3, 1.0}) {
        const auto trace = dat::mmr_select(query, candidates, make_config(2, 1, lambda));
        CHECK(trace.selected == std::vector<std::size_t>{0});
        CHECK(trace.step_scores[0].relevance == 1.0);
        CHECK(trace.step_scores[0].diversity == 0.0);
    }
    CHECK(dat::first_pick(query, candidates) == 0);
}

TEST_CASE("single candidate and all-zero relevance tie-breaks") {
    const TokenSequence query{"q", "r", "s"};
    CHECK(dat::first_pick(query, {{"z"}}) == 0);
    // Query disjoint from every candidate: all alphas zero, lowest index wins.
    const std::vector<TokenSequence> disjoint{{"m", "n"}, {"o", "p"}, {"u", "v"}};
    CHECK(dat::first_pick(query, disjoint) == 0);
    const auto trace = dat::mmr_select(query, disjoint, make_config(3, 2, 1.0));
    CHECK(trace.selected == std::vector<std::size_t>{0, 1});
}

TEST_CASE("diversity pushes the second pick away from the first") {
    const TokenSequence query{"a", "b", "c", "d"};
    // Candidate 0: best relevance. Candidate 1: near-duplicate of 0.
    // Candidate 2: moderately relevant but unlike 0.
    const std::vector<TokenSequence> candidates{
        {"a", "b", "c", "d", "e"},
        {"a", "b", "c", "d", "f"},
        {"c", "d", "x", "y"},
    };
    const auto relevance_only = dat::mmr_select(query, candidates, make_config(3, 2, 0.0));
    CHECK(relevance_only.selected == std::vector<std::size_t>{0, 1});
    const auto diversified = dat::mmr_select(query, candidates, make_config(3, 2, 2.0));
    CHECK(diversified.selected == std::vector<std::size_t>{0, 2});
}

TEST_CASE("selection size and uniqueness") {
    std::mt19937 rng(23);
    for (int round = 0; round < 100; ++round) {
        const TokenSequence query = testutil::random_sequence(rng, 8);
        const auto candidates = random_candidates(rng, 8);
        const int k = 1 + static_cast<int>(rng() % 4);
        const auto config =
            make_config(std::max<int>(k, static_cast<int>(candidates.size())), k, 0.5);
        const auto trace = dat::mmr_select(query, candidates, config);
        CHECK(trace.selected.size() ==
              std::min<std::size_t>(static_cast<std::size_t>(k), candidates.size()));
        CHECK(trace.shortfall == (candidates.size() < static_cast<std::size_t>(k)));
        auto sorted = trace.selected;
        std::sort(sorted.begin(), sorted.end());
        CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
        CHECK(trace.step_scores.size() == trace.selected.size());
    }
}

TEST_CASE("mmr_select matches the literal greedy oracle") {
    std::mt19937 rng(29);
    for (int round = 0; round < 150; ++round) {
        const TokenSequence query = testutil::random_sequence(rng, 8);
        const auto candidates = random_candidates(rng, 8);
        const int k = 1 + static_cast<int>(rng() % 4);
        for (const double lambda : {0.0, 0.5, 1.0}) {
            const auto config =
                make_config(std::max<int>(k, static_cast<int>(candidates.size())), k, lambda);
            const auto trace = dat::mmr_select(query, candidates, config);
            CHECK(trace.selected == oracle::mmr(query, candidates, k, lambda));
        }
    }
}

TEST_CASE("first selection is invariant under lambda") {
    std::mt19937 rng(31);
    for (int round = 0; round < 100; ++round) {
        const TokenSequence query = testutil::random_sequence(rng, 8);
        const auto candidates = random_candidates(rng, 8);
        const auto config = make_config(static_cast<int>(candidates.size()) + 4, 2, 0.0);
        std::size_t first = dat::first_pick(query, candidates);
        for (const double lambda : {0.0, 0.3, 1.0, 7.5}) {
            auto c = config;
            c.lambda = lambda;
            CHECK(dat::mmr_select(query, candidates, c).selected.front() == first);
        }
    }
}

TEST_CASE("permutation covariance with distinct scores") {
    const TokenSequence query{"a", "b", "c", "d", "e"};
    // Built so every alpha(query, .) and pairwise alpha is distinct.
    const std::vector<TokenSequence> candidates{
        {"a", "b", "c", "d", "e", "f"},
        {"a", "b", "c", "x", "y"},
        {"a", "x", "y", "z", "w"},
        {"d", "e", "x", "y"},
    };
    const auto config = make_config(4, 3, 0.7);
    const auto base = dat::mmr_select(query, candidates, config).selected;

    const std::vector<std::size_t> perm{2, 0, 3, 1};  // new_list[i] = candidates[perm[i]]
    std::vector<TokenSequence> permuted;
    permuted.reserve(candidates.size());
    for (const auto p : perm) permuted.push_back(candidates[p]);
    const auto shuffled = dat::mmr_select(query, permuted, config).selected;

    std::vector<std::size_t> mapped;
    mapped.reserve(shuffled.size());
    for (const auto idx : shuffled) mapped.push_back(perm[idx]);
    CHECK(mapped == base);
}

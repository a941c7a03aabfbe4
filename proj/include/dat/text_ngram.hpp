#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace dat {

// A normalized word sequence: lowercased tokens split on runs of
// non-alphanumeric characters. Normalization is idempotent, so
// tokenize(join_tokens(seq)) == seq for any tokenizer output.
using TokenSequence = std::vector<std::string>;

TokenSequence tokenize(std::string_view text);
std::string join_tokens(const TokenSequence& tokens);

// Identifier for the normalization scheme, stored in persisted indexes so a
// pool built with a different tokenizer is rejected on load.
inline constexpr const char* kTokenizerId = "unicode-lower-alnum-v1";

// Sliding-window n-grams of one order with multiplicities. Keys are the
// window tokens joined with an unit separator (0x1f), which the tokenizer
// can never emit inside a token.
class NGramProfile {
public:
    static constexpr int kMinOrder = 1;
    static constexpr int kMaxOrder = 4;

    NGramProfile() = default;
    NGramProfile(const TokenSequence& seq, int order);

    int order() const { return order_; }
    // Total window count: max(0, |seq| - order + 1) for the source sequence.
    long total() const { return total_; }
    const std::unordered_map<std::string, int>& counts() const { return counts_; }

    static std::string make_key(const TokenSequence& seq, std::size_t begin, int order);
    static TokenSequence split_key(const std::string& key);

private:
    int order_ = 1;
    long total_ = 0;
    std::unordered_map<std::string, int> counts_;
};

// Profiles for all four orders of one sequence, computed once. Scoring loops
// (MMR, retrieval rerank) hit the same sequences repeatedly.
class ProfileSet {
public:
    ProfileSet() = default;
    explicit ProfileSet(TokenSequence seq);

    const TokenSequence& tokens() const { return tokens_; }
    const NGramProfile& order(int n) const;

private:
    TokenSequence tokens_;
    NGramProfile profiles_[NGramProfile::kMaxOrder];
};

// Recall of x against q at order n: clipped n-gram matches over q's total
// window count. Zero when q has no windows of that order.
double recall_n(const NGramProfile& q, const NGramProfile& x);
double recall_n(const TokenSequence& q, const TokenSequence& x, int n);

// Mean of recall_n over n = 1..4. Always divides by 4, so sequences shorter
// than 4 tokens cannot reach 1 even against themselves.
double alpha(const ProfileSet& q, const ProfileSet& x);
double alpha(const TokenSequence& q, const TokenSequence& x);

}  // namespace dat

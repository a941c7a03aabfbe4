#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <memory>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "dat/pair_generation.hpp"
#include "dat/text_ngram.hpp"

namespace dat {

struct Bm25Params {
    double k1 = 1.5;
    double b = 0.75;
};

struct PoolEntry {
    DemonstrationPair pair;
    TokenSequence source_tokens;  // tokenize(pair.source)
    std::uint64_t insert_sequence = 0;
    std::string origin_query;

    // Derived per-entry index state.
    std::unordered_map<std::string, int> term_frequencies;
    ProfileSet source_profiles;  // for the rerank stage
};

struct RetrievalHit {
    const PoolEntry* entry = nullptr;
    double bm25 = 0.0;
    double alpha = 0.0;
};

// Accumulated demonstration pairs with an incremental Okapi BM25 index over
// unigram source tokens. Retrieval is two-stage: a BM25 shortlist reranked
// by n-gram recall against the query. Single writer, concurrent readers.
class DemonstrationPool {
public:
    static constexpr int kSchemaVersion = 1;

    explicit DemonstrationPool(Bm25Params params = {});
    DemonstrationPool(DemonstrationPool&&) = default;
    DemonstrationPool& operator=(DemonstrationPool&&) = default;

    struct InsertResult {
        bool inserted = false;  // false: exact duplicate (normalized source, target)
        std::uint64_t insert_sequence = 0;
    };

    InsertResult insert(const DemonstrationPair& pair, const std::string& origin_query = {});

    std::size_t size() const;
    std::vector<const PoolEntry*> entries() const;

    // Okapi BM25 of the entry against distinct query terms, using
    // idf = ln(1 + (N - df + 0.5) / (df + 0.5)).
    double bm25_score(const TokenSequence& query_tokens, const PoolEntry& entry) const;

    // Stage 1: top_n entries by BM25 (ties toward earlier inserts).
    // Stage 2: those reranked by alpha(query, source) descending (same
    // tie-break); the top k survive in rerank order.
    std::vector<DemonstrationPair> rbm25_retrieve(const std::string& query, std::size_t top_n,
                                                  std::size_t k) const;
    std::vector<RetrievalHit> rbm25_retrieve_hits(const std::string& query, std::size_t top_n,
                                                  std::size_t k) const;

    // Snapshot to newline-delimited JSON: a header record with schema
    // version, tokenizer id and entry count, then one record per entry.
    void persist(const std::filesystem::path& path) const;
    static DemonstrationPool load(const std::filesystem::path& path, Bm25Params params = {});

    // Compares the incrementally maintained index against a from-scratch
    // rebuild. Returns false and fills `detail` on any mismatch.
    bool verify_index(std::string* detail = nullptr) const;

    const Bm25Params& params() const { return params_; }
    double average_document_length() const;
    std::size_t total_documents() const { return size(); }
    std::unordered_map<std::string, int> document_frequencies() const;

private:
    double bm25_score_locked(const TokenSequence& query_tokens, const PoolEntry& entry) const;
    std::vector<RetrievalHit> retrieve_locked(const std::string& query, std::size_t top_n,
                                              std::size_t k) const;

    void append_entry(const DemonstrationPair& pair, const std::string& origin_query,
                      std::uint64_t sequence, const std::string& dedup_key,
                      TokenSequence tokens);

    Bm25Params params_;
    // behind unique_ptr so the pool stays movable
    mutable std::unique_ptr<std::shared_mutex> mutex_;
    // deque: inserts never invalidate entry pointers handed to readers
    std::deque<PoolEntry> store_;
    std::unordered_map<std::string, std::uint64_t> dedup_keys_;  // -> insert_sequence
    std::unordered_map<std::string, int> document_frequencies_;
    long long total_token_count_ = 0;
    std::uint64_t next_sequence_ = 0;
};

}  // namespace dat

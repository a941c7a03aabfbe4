#include "dat/demo_pool.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_set>

#include "json.hpp"

#include "dat/errors.hpp"

namespace dat {

namespace {

using nlohmann::json;

constexpr char kDedupSep = '\x1e';

std::string dedup_key_for(const TokenSequence& source_tokens, const std::string& target) {
    return join_tokens(source_tokens) + kDedupSep + target;
}

// Distinct query terms in first-occurrence order; scoring iterates this so
// results do not depend on hash-map ordering.
std::vector<std::string> distinct_terms(const TokenSequence& tokens) {
    std::vector<std::string> terms;
    std::unordered_set<std::string> seen;
    for (const auto& t : tokens) {
        if (seen.insert(t).second) terms.push_back(t);
    }
    return terms;
}

}  // namespace

DemonstrationPool::DemonstrationPool(Bm25Params params)
    : params_(params), mutex_(std::make_unique<std::shared_mutex>()) {}

void DemonstrationPool::append_entry(const DemonstrationPair& pair,
                                     const std::string& origin_query, std::uint64_t sequence,
                                     const std::string& dedup_key, TokenSequence tokens) {
    PoolEntry entry;
    entry.pair = pair;
    entry.source_tokens = tokens;
    entry.insert_sequence = sequence;
    entry.origin_query = origin_query;
    for (const auto& t : entry.source_tokens) ++entry.term_frequencies[t];
    entry.source_profiles = ProfileSet(std::move(tokens));

    for (const auto& [term, tf] : entry.term_frequencies) {
        (void)tf;
        ++document_frequencies_[term];
    }
    total_token_count_ += static_cast<long long>(entry.source_tokens.size());
    dedup_keys_.emplace(dedup_key, sequence);
    store_.push_back(std::move(entry));
}

DemonstrationPool::InsertResult DemonstrationPool::insert(const DemonstrationPair& pair,
                                                          const std::string& origin_query) {
    if (pair.source.empty() || pair.target.empty()) {
        throw ConfigError("pool: demonstration pair sides must be non-empty");
    }
    TokenSequence tokens = tokenize(pair.source);
    const std::string key = dedup_key_for(tokens, pair.target);

    std::unique_lock lock(*mutex_);
    if (const auto it = dedup_keys_.find(key); it != dedup_keys_.end()) {
        return {false, it->second};
    }
    const std::uint64_t seq = next_sequence_++;
    append_entry(pair, origin_query, seq, key, std::move(tokens));
    return {true, seq};
}

std::size_t DemonstrationPool::size() const {
    std::shared_lock lock(*mutex_);
    return store_.size();
}

std::vector<const PoolEntry*> DemonstrationPool::entries() const {
    std::shared_lock lock(*mutex_);
    std::vector<const PoolEntry*> out;
    out.reserve(store_.size());
    for (const auto& e : store_) out.push_back(&e);
    return out;
}

double DemonstrationPool::average_document_length() const {
    std::shared_lock lock(*mutex_);
    if (store_.empty()) return 0.0;
    return static_cast<double>(total_token_count_) / static_cast<double>(store_.size());
}

std::unordered_map<std::string, int> DemonstrationPool::document_frequencies() const {
    std::shared_lock lock(*mutex_);
    return document_frequencies_;
}

double DemonstrationPool::bm25_score_locked(const TokenSequence& query_tokens,
                                            const PoolEntry& entry) const {
    if (store_.empty() || total_token_count_ == 0) return 0.0;
    const double doc_count = static_cast<double>(store_.size());
    const double avgdl = static_cast<double>(total_token_count_) / doc_count;
    const double dl = static_cast<double>(entry.source_tokens.size());

    double score = 0.0;
    for (const auto& term : distinct_terms(query_tokens)) {
        const auto tf_it = entry.term_frequencies.find(term);
        if (tf_it == entry.term_frequencies.end()) continue;
        const auto df_it = document_frequencies_.find(term);
        const double df = df_it == document_frequencies_.end()
                              ? 0.0
                              : static_cast<double>(df_it->second);
        const double idf = std::log(1.0 + (doc_count - df + 0.5) / (df + 0.5));
        const double tf = static_cast<double>(tf_it->second);
        score += idf * (tf * (params_.k1 + 1.0)) /
                 (tf + params_.k1 * (1.0 - params_.b + params_.b * dl / avgdl));
    }
    return score;
}

double DemonstrationPool::bm25_score(const TokenSequence& query_tokens,
                                     const PoolEntry& entry) const {
    std::shared_lock lock(*mutex_);
    return bm25_score_locked(query_tokens, entry);
}

std::vector<RetrievalHit> DemonstrationPool::retrieve_locked(const std::string& query,
                                                             std::size_t top_n,
                                                             std::size_t k) const {
    if (k > top_n) throw ConfigError("pool: retrieval k must not exceed top_n");
    if (store_.empty()) return {};

    const TokenSequence query_tokens = tokenize(query);
    std::vector<RetrievalHit> hits;
    hits.reserve(store_.size());
    for (const auto& entry : store_) {
        hits.push_back({&entry, bm25_score_locked(query_tokens, entry), 0.0});
    }

    const auto by_bm25 = [](const RetrievalHit& a, const RetrievalHit& b) {
        if (a.bm25 != b.bm25) return a.bm25 > b.bm25;
        return a.entry->insert_sequence < b.entry->insert_sequence;
    };
    if (hits.size() > top_n) {
        std::nth_element(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(top_n),
                         hits.end(), by_bm25);
        hits.resize(top_n);
    }
    std::sort(hits.begin(), hits.end(), by_bm25);

    const ProfileSet query_profiles(query_tokens);
    for (auto& hit : hits) {
        hit.alpha = alpha(query_profiles, hit.entry->source_profiles);
    }
    std::stable_sort(hits.begin(), hits.end(), [](const RetrievalHit& a, const RetrievalHit& b) {
        if (a.alpha != b.alpha) return a.alpha > b.alpha;
        return a.entry->insert_sequence < b.entry->insert_sequence;
    });
    if (hits.size() > k) hits.resize(k);
    return hits;
}

std::vector<RetrievalHit> DemonstrationPool::rbm25_retrieve_hits(const std::string& query,
                                                                 std::size_t top_n,
                                                                 std::size_t k) const {
    std::shared_lock lock(*mutex_);
    return retrieve_locked(query, top_n, k);
}

std::vector<DemonstrationPair> DemonstrationPool::rbm25_retrieve(const std::string& query,
                                                                 std::size_t top_n,
                                                                 std::size_t k) const {
    std::shared_lock lock(*mutex_);
    std::vector<DemonstrationPair> out;
    for (const auto& hit : retrieve_locked(query, top_n, k)) {
        out.push_back(hit.entry->pair);
    }
    return out;
}

void DemonstrationPool::persist(const std::filesystem::path& path) const {
    std::shared_lock lock(*mutex_);
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw StoreError("pool store: cannot write " + path.string());

    json header = {{"schema_version", kSchemaVersion},
                   {"tokenizer", kTokenizerId},
                   {"entries", store_.size()}};
    out << header.dump() << '\n';
    for (const auto& entry : store_) {
        json j = {{"source", entry.pair.source},
                  {"target", entry.pair.target},
                  {"provenance", provenance_name(entry.pair.provenance)},
                  {"insert_sequence", entry.insert_sequence}};
        if (!entry.origin_query.empty()) j["origin_query"] = entry.origin_query;
        out << j.dump() << '\n';
    }
    if (!out) throw StoreError("pool store: write failed for " + path.string());
}

DemonstrationPool DemonstrationPool::load(const std::filesystem::path& path, Bm25Params params) {
    std::ifstream in(path);
    if (!in) throw StoreError("pool store: cannot open " + path.string());

    DemonstrationPool pool(params);
    std::string line;
    std::size_t line_no = 0;
    bool header_seen = false;
    std::size_t declared_entries = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw StoreError("pool store " + path.string() + " line " + std::to_string(line_no) +
                             ": " + e.what());
        }
        if (!header_seen) {
            if (!j.contains("schema_version")) {
                throw StoreError("pool store " + path.string() +
                                 " line 1: missing header record with schema_version");
            }
            const int version = j["schema_version"].get<int>();
            if (version != kSchemaVersion) {
                throw StoreError("pool store " + path.string() + ": schema_version " +
                                 std::to_string(version) + " unsupported (expected " +
                                 std::to_string(kSchemaVersion) + ")");
            }
            const auto tokenizer = j.value("tokenizer", std::string{});
            if (tokenizer != kTokenizerId) {
                throw StoreError("pool store " + path.string() + ": tokenizer '" + tokenizer +
                                 "' does not match '" + kTokenizerId + "'");
            }
            declared_entries = j.value("entries", std::size_t{0});
            header_seen = true;
            continue;
        }
        try {
            DemonstrationPair pair;
            pair.source = j.at("source").get<std::string>();
            pair.target = j.at("target").get<std::string>();
            pair.provenance = provenance_from_name(j.value("provenance", "generated"));
            const auto seq = j.at("insert_sequence").get<std::uint64_t>();
            const auto origin = j.value("origin_query", std::string{});

            TokenSequence tokens = tokenize(pair.source);
            const std::string key = dedup_key_for(tokens, pair.target);
            if (pool.dedup_keys_.count(key) != 0) {
                throw StoreError("duplicate entry");
            }
            pool.append_entry(pair, origin, seq, key, std::move(tokens));
            pool.next_sequence_ = std::max(pool.next_sequence_, seq + 1);
        } catch (const json::exception& e) {
            throw StoreError("pool store " + path.string() + " line " + std::to_string(line_no) +
                             ": " + e.what());
        } catch (const StoreError&) {
            throw StoreError("pool store " + path.string() + " line " + std::to_string(line_no) +
                             ": duplicate (source, target) entry");
        }
    }
    if (header_seen && pool.store_.size() != declared_entries) {
        throw StoreError("pool store " + path.string() + ": header declares " +
                         std::to_string(declared_entries) + " entries but " +
                         std::to_string(pool.store_.size()) + " were read");
    }
    return pool;
}

bool DemonstrationPool::verify_index(std::string* detail) const {
    std::shared_lock lock(*mutex_);
    const auto fail = [&](const std::string& why) {
        if (detail != nullptr) *detail = why;
        return false;
    };

    std::unordered_map<std::string, int> rebuilt_df;
    long long rebuilt_total = 0;
    std::unordered_set<std::uint64_t> sequences;
    for (const auto& entry : store_) {
        const TokenSequence tokens = tokenize(entry.pair.source);
        if (tokens != entry.source_tokens) {
            return fail("entry " + std::to_string(entry.insert_sequence) +
                        ": cached tokens differ from tokenizer output");
        }
        std::unordered_map<std::string, int> tf;
        for (const auto& t : tokens) ++tf[t];
        if (tf != entry.term_frequencies) {
            return fail("entry " + std::to_string(entry.insert_sequence) +
                        ": cached term frequencies differ from rebuild");
        }
        for (const auto& [term, count] : tf) {
            (void)count;
            ++rebuilt_df[term];
        }
        rebuilt_total += static_cast<long long>(tokens.size());
        if (!sequences.insert(entry.insert_sequence).second) {
            return fail("duplicate insert_sequence " + std::to_string(entry.insert_sequence));
        }
    }
    if (rebuilt_df != document_frequencies_) {
        return fail("document frequencies differ from a from-scratch rebuild");
    }
    if (rebuilt_total != total_token_count_) {
        return fail("total token count differs from a from-scratch rebuild");
    }
    if (dedup_keys_.size() != store_.size()) {
        return fail("dedup key count does not match entry count");
    }
    return true;
}

}  // namespace dat

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dat/demo_pool.hpp"
#include "dat/llm_gateway.hpp"
#include "dat/mmr_filter.hpp"
#include "dat/pair_generation.hpp"
#include "dat/prompt_template.hpp"

#include "json.hpp"

namespace dat {

enum class PipelineMode {
    zero_shot,       // instruction + query, no demonstrations
    few_shot_fixed,  // a fixed human-annotated pair set as demonstrations
    dat,             // self-generated demonstrations
    dat_fixed,       // self-generated, with fixed pairs aiding target-side generation only
    dat_accumulate,  // demonstrations retrieved from an accumulated pool
};

const char* mode_name(PipelineMode mode);
PipelineMode mode_from_name(const std::string& name);

struct PipelineConfig {
    PipelineMode mode = PipelineMode::dat;
    FilterConfig filter;  // m=10, k=4, lambda=1 defaults
    LangPair langs;
    std::vector<DemonstrationPair> fixed_pairs;  // required by few_shot_fixed / dat_fixed
    DemonstrationPool* pool = nullptr;           // required by dat_accumulate (non-owning)
    int shot_count = 4;                          // demonstrations in the final prompt
    std::size_t retrieval_top_n = 100;           // BM25 shortlist width for dat_accumulate
    GenerationParams generation;

    void validate() const;
};

struct StageTiming {
    double generate_ms = 0.0;
    double translate_pairs_ms = 0.0;
    double retrieve_ms = 0.0;
    double final_ms = 0.0;

    StageTiming& operator+=(const StageTiming& other);
    double total_ms() const {
        return generate_ms + translate_pairs_ms + retrieve_ms + final_ms;
    }
};

// Everything observable about one query's run. Wall-clock timings stay in
// memory only; the persisted record must be byte-stable across reruns and
// parallelism levels, so serialization covers every field except `timing`.
struct TranslationRecord {
    static constexpr int kSchemaVersion = 1;

    std::string query;
    std::optional<std::string> reference;
    std::string hypothesis;  // empty on failure
    std::string mode;
    std::vector<DemonstrationPair> demonstrations_used;
    std::optional<SelectionTrace> selection_trace;
    std::vector<std::string> exchanges;  // stage label per gateway call, in issue order
    std::vector<std::string> flags;
    std::string error;  // empty on success
    std::uint64_t calls = 0;
    std::uint64_t pool_inserted = 0;  // pairs added to a pool by an accumulation run
    StageTiming timing;

    bool ok() const { return error.empty(); }
};

nlohmann::json record_to_json(const TranslationRecord& record);
TranslationRecord record_from_json(const nlohmann::json& j);
std::vector<TranslationRecord> load_records(const std::filesystem::path& path);

// Translates one query under the configured mode. Failures are captured in
// the record (error message, empty hypothesis) rather than thrown, except
// for configuration errors, which throw before any work starts.
TranslationRecord translate(const std::string& query, const PipelineConfig& config,
                            ChatGateway& gateway, const TemplateLibrary& templates);

struct QueryItem {
    std::string query;
    std::optional<std::string> reference;
};

// One query per line; a tab splits query from reference.
std::vector<QueryItem> load_query_file(const std::filesystem::path& path);

struct BatchSummary {
    std::size_t total = 0;
    std::size_t succeeded = 0;
    std::size_t failed = 0;
    std::map<std::string, std::size_t> flag_counts;
    StageTiming timing;
    std::uint64_t calls = 0;
    double wall_ms = 0.0;

    BatchSummary& operator+=(const BatchSummary& other);
};

// Translates queries under a shared config with up to `parallelism` workers,
// writing one JSON record per line to `out` in input order as the ordered
// prefix completes. `on_record_ordered`, when set, runs on each record in
// input order before it is written (accumulation uses it to insert pairs
// into the pool deterministically).
BatchSummary run_batch(std::span<const QueryItem> items, const PipelineConfig& config,
                       ChatGateway& gateway, const TemplateLibrary& templates, std::ostream& out,
                       int parallelism = 1,
                       const std::function<void(std::size_t, TranslationRecord&)>&
                           on_record_ordered = {});

struct AccumulationOptions {
    std::vector<std::size_t> seed_prefixes;  // ascending; empty means {all seeds}
    int parallelism = 1;
    std::filesystem::path output_dir;
    std::string stem = "run";  // files: <stem>_seed.ndjson, <stem>_eval_p<prefix>.ndjson
};

struct PrefixEvaluation {
    std::size_t seed_prefix = 0;
    std::size_t pool_size = 0;  // pool size when this evaluation ran
    BatchSummary summary;
    std::filesystem::path records_path;
};

struct AccumulationResult {
    BatchSummary seed_summary;
    std::filesystem::path seed_records_path;
    std::vector<PrefixEvaluation> evaluations;
    std::size_t final_pool_size = 0;
    std::uint64_t pool_inserted_total = 0;
};

// Accumulation protocol: run generation (dat, or dat_fixed when fixed pairs
// are configured) over seed queries, inserting every produced pair into the
// pool, then evaluate the full eval set with pool retrieval after each seed
// prefix. The pool is never grown by evaluation queries. Seed and eval sets
// must be disjoint.
AccumulationResult accumulate_then_evaluate(std::span<const QueryItem> seed_items,
                                            std::span<const QueryItem> eval_items,
                                            const PipelineConfig& config, ChatGateway& gateway,
                                            const TemplateLibrary& templates,
                                            DemonstrationPool& pool,
                                            const AccumulationOptions& options);

}  // namespace dat

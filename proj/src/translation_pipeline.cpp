#include "dat/translation_pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <condition_variable>
#include <fstream>
#include <mutex>
#include <ostream>
#include <thread>
#include <unordered_set>

#include "dat/errors.hpp"

namespace dat {

namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::string trimmed(const std::string& s) {
    std::size_t begin = 0;
    std::size_t end = s.size();
    while (begin < end && std::isspace(static_cast<unsigned char>(s[begin]))) ++begin;
    while (end > begin && std::isspace(static_cast<unsigned char>(s[end - 1]))) --end;
    return s.substr(begin, end - begin);
}

constexpr const char* kStageGenerate = "generate_sources";
constexpr const char* kStageTranslatePair = "translate_source";
constexpr const char* kStageFinal = "final_translation";

json trace_to_json(const SelectionTrace& trace) {
    json steps = json::array();
    for (const auto& s : trace.step_scores) {
        steps.push_back(
            {{"relevance", s.relevance}, {"diversity", s.diversity}, {"objective", s.objective}});
    }
    return {{"selected", trace.selected},
            {"steps", steps},
            {"shortfall", trace.shortfall},
            {"bypassed", trace.bypassed}};
}

SelectionTrace trace_from_json(const json& j) {
    SelectionTrace trace;
    trace.selected = j.at("selected").get<std::vector<std::size_t>>();
    for (const auto& s : j.value("steps", json::array())) {
        trace.step_scores.push_back({s.value("relevance", 0.0), s.value("diversity", 0.0),
                                     s.value("objective", 0.0)});
    }
    trace.shortfall = j.value("shortfall", false);
    trace.bypassed = j.value("bypassed", false);
    return trace;
}

// The final translation call. The hypothesis is the trimmed response as a
// whole: degenerate long outputs must stay measurable downstream.
void final_translation(TranslationRecord& rec, const PipelineConfig& config,
                       ChatGateway& gateway, const TemplateLibrary& templates) {
    const auto start = Clock::now();
    const std::string prompt = render_template(
        templates.get(TemplateRole::query_translation),
        {{"query", rec.query},
         {"source_lang", config.langs.source},
         {"target_lang", config.langs.target},
         {"demonstrations", render_demonstrations(rec.demonstrations_used, config.langs)}});
    const ChatExchange exchange =
        gateway.complete({{"user", prompt}}, config.generation);
    rec.exchanges.push_back(kStageFinal);
    rec.hypothesis = trimmed(exchange.response_text);
    rec.timing.final_ms += ms_since(start);
    if (rec.hypothesis.empty()) {
        throw MalformedResponseError("final translation came back empty");
    }
}

std::span<const DemonstrationPair> fixed_view(const PipelineConfig& config) {
    const auto take =
        std::min(config.fixed_pairs.size(), static_cast<std::size_t>(config.shot_count));
    return std::span<const DemonstrationPair>(config.fixed_pairs.data(), take);
}

}  // namespace

const char* mode_name(PipelineMode mode) {
    switch (mode) {
        case PipelineMode::zero_shot: return "zero_shot";
        case PipelineMode::few_shot_fixed: return "few_shot_fixed";
        case PipelineMode::dat: return "dat";
        case PipelineMode::dat_fixed: return "dat_fixed";
        case PipelineMode::dat_accumulate: return "dat_accumulate";
    }
    return "dat";
}

PipelineMode mode_from_name(const std::string& name) {
    std::string n = name;
    for (auto& c : n) {
        if (c == '-') c = '_';
    }
    if (n == "zero_shot") return PipelineMode::zero_shot;
    if (n == "few_shot" || n == "few_shot_fixed") return PipelineMode::few_shot_fixed;
    if (n == "dat") return PipelineMode::dat;
    if (n == "dat_fixed") return PipelineMode::dat_fixed;
    if (n == "dat_accumulate") return PipelineMode::dat_accumulate;
    throw ConfigError("unknown pipeline mode: " + name);
}

void PipelineConfig::validate() const {
    filter.validate();
    if (shot_count < 1) throw ConfigError("pipeline: shot_count must be >= 1");
    if (langs.source.empty() || langs.target.empty()) {
        throw ConfigError("pipeline: source and target language names are required");
    }
    if (generation.temperature < 0.0) {
        throw ConfigError("pipeline: temperature must be >= 0");
    }
    if (generation.max_output_tokens < 1) {
        throw ConfigError("pipeline: max_output_tokens must be >= 1");
    }
    if ((mode == PipelineMode::few_shot_fixed || mode == PipelineMode::dat_fixed) &&
        fixed_pairs.empty()) {
        throw ConfigError(std::string("pipeline: mode ") + mode_name(mode) +
                          " requires fixed pairs");
    }
    if (mode == PipelineMode::dat_accumulate && pool == nullptr) {
        throw ConfigError("pipeline: mode dat_accumulate requires a demonstration pool");
    }
    if ((mode == PipelineMode::dat || mode == PipelineMode::dat_fixed) &&
        filter.k > shot_count) {
        throw ConfigError("pipeline: filter k (" + std::to_string(filter.k) +
                          ") exceeds shot_count (" + std::to_string(shot_count) +
                          "); every kept pair enters the final prompt");
    }
    if (mode == PipelineMode::dat_accumulate &&
        retrieval_top_n < static_cast<std::size_t>(shot_count)) {
        throw ConfigError("pipeline: retrieval_top_n must be >= shot_count");
    }
}

StageTiming& StageTiming::operator+=(const StageTiming& other) {
    generate_ms += other.generate_ms;
    translate_pairs_ms += other.translate_pairs_ms;
    retrieve_ms += other.retrieve_ms;
    final_ms += other.final_ms;
    return *this;
}

BatchSummary& BatchSummary::operator+=(const BatchSummary& other) {
    total += other.total;
    succeeded += other.succeeded;
    failed += other.failed;
    for (const auto& [flag, count] : other.flag_counts) flag_counts[flag] += count;
    timing += other.timing;
    calls += other.calls;
    wall_ms += other.wall_ms;
    return *this;
}

TranslationRecord translate(const std::string& query, const PipelineConfig& config,
                            ChatGateway& gateway, const TemplateLibrary& templates) {
    config.validate();

    TranslationRecord rec;
    rec.query = query;
    rec.mode = mode_name(config.mode);
    if (trimmed(query).empty()) {
        rec.error = "empty query";
        rec.flags.push_back("empty_query");
        return rec;
    }

    GenerationContext ctx{gateway, templates, config.langs, config.generation};
    try {
        switch (config.mode) {
            case PipelineMode::zero_shot:
                break;

            case PipelineMode::few_shot_fixed: {
                for (const auto& pair : fixed_view(config)) {
                    auto used = pair;
                    used.provenance = Provenance::fixed;
                    rec.demonstrations_used.push_back(std::move(used));
                }
                break;
            }

            case PipelineMode::dat:
            case PipelineMode::dat_fixed: {
                const auto gen_start = Clock::now();
                const auto fixed = config.mode == PipelineMode::dat_fixed
                                       ? fixed_view(config)
                                       : std::span<const DemonstrationPair>{};
                DemonstrationBuild build =
                    build_demonstrations(ctx, query, config.filter, fixed);
                rec.timing.generate_ms += ms_since(gen_start);
                for (std::uint64_t i = 0; i < build.generation_calls; ++i) {
                    rec.exchanges.push_back(kStageGenerate);
                }
                for (std::uint64_t i = 0; i < build.translation_calls; ++i) {
                    rec.exchanges.push_back(kStageTranslatePair);
                }
                rec.demonstrations_used = std::move(build.pairs);
                rec.selection_trace = std::move(build.trace);
                if (rec.selection_trace->bypassed) rec.flags.push_back("filter_bypassed");
                if (rec.selection_trace->shortfall) rec.flags.push_back("selection_shortfall");
                break;
            }

            case PipelineMode::dat_accumulate: {
                const auto rstart = Clock::now();
                auto retrieved = config.pool->rbm25_retrieve(
                    query, config.retrieval_top_n,
                    static_cast<std::size_t>(config.shot_count));
                rec.timing.retrieve_ms += ms_since(rstart);
                if (retrieved.empty()) {
                    rec.flags.push_back("empty_pool_fallback");
                } else {
                    for (auto& pair : retrieved) {
                        pair.provenance = Provenance::pooled;
                        rec.demonstrations_used.push_back(std::move(pair));
                    }
                }
                break;
            }
        }

        final_translation(rec, config, gateway, templates);
    } catch (const std::exception& e) {
        rec.error = e.what();
        rec.hypothesis.clear();
    }
    rec.calls = rec.exchanges.size();
    return rec;
}

json record_to_json(const TranslationRecord& record) {
    json demos = json::array();
    for (const auto& d : record.demonstrations_used) {
        demos.push_back({{"source", d.source},
                         {"target", d.target},
                         {"provenance", provenance_name(d.provenance)}});
    }
    json j = {{"schema_version", TranslationRecord::kSchemaVersion},
              {"query", record.query},
              {"reference", record.reference.has_value() ? json(*record.reference) : json()},
              {"hypothesis", record.hypothesis},
              {"mode", record.mode},
              {"demonstrations", demos},
              {"selection", record.selection_trace.has_value()
                                ? trace_to_json(*record.selection_trace)
                                : json()},
              {"exchanges", record.exchanges},
              {"flags", record.flags},
              {"error", record.error},
              {"calls", record.calls},
              {"pool_inserted", record.pool_inserted}};
    return j;
}

TranslationRecord record_from_json(const json& j) {
    TranslationRecord rec;
    rec.query = j.at("query").get<std::string>();
    if (j.contains("reference") && !j["reference"].is_null()) {
        rec.reference = j["reference"].get<std::string>();
    }
    rec.hypothesis = j.value("hypothesis", std::string{});
    rec.mode = j.value("mode", std::string{});
    for (const auto& d : j.value("demonstrations", json::array())) {
        DemonstrationPair pair;
        pair.source = d.at("source").get<std::string>();
        pair.target = d.at("target").get<std::string>();
        pair.provenance = provenance_from_name(d.value("provenance", "generated"));
        rec.demonstrations_used.push_back(std::move(pair));
    }
    if (j.contains("selection") && !j["selection"].is_null()) {
        rec.selection_trace = trace_from_json(j["selection"]);
    }
    rec.exchanges = j.value("exchanges", std::vector<std::string>{});
    rec.flags = j.value("flags", std::vector<std::string>{});
    rec.error = j.value("error", std::string{});
    rec.calls = j.value("calls", std::uint64_t{0});
    rec.pool_inserted = j.value("pool_inserted", std::uint64_t{0});
    return rec;
}

std::vector<TranslationRecord> load_records(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw StoreError("record file: cannot open " + path.string());
    std::vector<TranslationRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            records.push_back(record_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw StoreError("record file " + path.string() + " line " +
                             std::to_string(line_no) + ": " + e.what());
        }
    }
    return records;
}

std::vector<QueryItem> load_query_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("input file: cannot open " + path.string());
    std::vector<QueryItem> items;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        QueryItem item;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) {
            item.query = line;
        } else {
            item.query = line.substr(0, tab);
            item.reference = line.substr(tab + 1);
        }
        items.push_back(std::move(item));
    }
    return items;
}

BatchSummary run_batch(std::span<const QueryItem> items, const PipelineConfig& config,
                       ChatGateway& gateway, const TemplateLibrary& templates, std::ostream& out,
                       int parallelism,
                       const std::function<void(std::size_t, TranslationRecord&)>&
                           on_record_ordered) {
    if (items.empty()) throw ConfigError("batch: query list is empty");
    config.validate();

    const auto wall_start = Clock::now();
    const std::size_t n = items.size();
    const int workers =
        std::max(1, std::min<int>(parallelism, static_cast<int>(n)));

    std::mutex mutex;
    std::condition_variable ready;
    std::vector<std::optional<TranslationRecord>> done(n);
    std::atomic<std::size_t> next{0};

    auto work = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            TranslationRecord rec = translate(items[i].query, config, gateway, templates);
            rec.reference = items[i].reference;
            {
                std::lock_guard lock(mutex);
                done[i] = std::move(rec);
            }
            ready.notify_all();
        }
    };

    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);

    BatchSummary summary;
    try {
        for (std::size_t i = 0; i < n; ++i) {
            std::unique_lock lock(mutex);
            ready.wait(lock, [&] { return done[i].has_value(); });
            TranslationRecord rec = std::move(*done[i]);
            done[i].reset();
            lock.unlock();

            if (on_record_ordered) on_record_ordered(i, rec);
            out << record_to_json(rec).dump() << '\n';

            ++summary.total;
            if (rec.ok()) {
                ++summary.succeeded;
            } else {
                ++summary.failed;
            }
            for (const auto& flag : rec.flags) ++summary.flag_counts[flag];
            summary.timing += rec.timing;
            summary.calls += rec.calls;
        }
    } catch (...) {
        next.store(n);  // stop handing out work, then drain the workers
        for (auto& t : pool) t.join();
        throw;
    }
    for (auto& t : pool) t.join();
    out.flush();
    if (!out) throw StoreError("batch: writing the record stream failed");

    summary.wall_ms = ms_since(wall_start);
    return summary;
}

AccumulationResult accumulate_then_evaluate(std::span<const QueryItem> seed_items,
                                            std::span<const QueryItem> eval_items,
                                            const PipelineConfig& config, ChatGateway& gateway,
                                            const TemplateLibrary& templates,
                                            DemonstrationPool& pool,
                                            const AccumulationOptions& options) {
    if (eval_items.empty()) throw ConfigError("accumulation: eval query list is empty");

    std::unordered_set<std::string> seed_queries;
    for (const auto& item : seed_items) seed_queries.insert(item.query);
    for (const auto& item : eval_items) {
        if (seed_queries.count(item.query) != 0) {
            throw ConfigError("accumulation: seed and eval sets share a query: " + item.query);
        }
    }

    std::vector<std::size_t> prefixes = options.seed_prefixes;
    if (prefixes.empty()) prefixes.push_back(seed_items.size());
    for (std::size_t i = 0; i < prefixes.size(); ++i) {
        if (prefixes[i] > seed_items.size()) {
            throw ConfigError("accumulation: seed prefix exceeds seed set size");
        }
        if (i > 0 && prefixes[i] <= prefixes[i - 1]) {
            throw ConfigError("accumulation: seed prefixes must be strictly ascending");
        }
    }

    // Seed phase config: plain generation, pairs flow into the pool via the
    // ordered hook. Eval phase config: retrieval against the frozen pool.
    PipelineConfig seed_config = config;
    seed_config.mode =
        config.fixed_pairs.empty() ? PipelineMode::dat : PipelineMode::dat_fixed;
    seed_config.pool = nullptr;
    seed_config.validate();

    PipelineConfig eval_config = config;
    eval_config.mode = PipelineMode::dat_accumulate;
    eval_config.pool = &pool;
    eval_config.validate();

    std::filesystem::create_directories(options.output_dir);

    AccumulationResult result;
    result.seed_records_path = options.output_dir / (options.stem + "_seed.ndjson");
    std::ofstream seed_out(result.seed_records_path, std::ios::trunc);
    if (!seed_out) {
        throw StoreError("accumulation: cannot write " + result.seed_records_path.string());
    }

    auto insert_pairs = [&](std::size_t, TranslationRecord& rec) {
        for (const auto& pair : rec.demonstrations_used) {
            if (pool.insert(pair, rec.query).inserted) ++rec.pool_inserted;
        }
        result.pool_inserted_total += rec.pool_inserted;
    };

    std::size_t processed = 0;
    for (const std::size_t prefix : prefixes) {
        if (prefix > processed) {
            const auto chunk = seed_items.subspan(processed, prefix - processed);
            result.seed_summary += run_batch(chunk, seed_config, gateway, templates, seed_out,
                                             options.parallelism, insert_pairs);
            processed = prefix;
        }

        PrefixEvaluation eval;
        eval.seed_prefix = prefix;
        eval.pool_size = pool.size();
        eval.records_path =
            options.output_dir /
            (options.stem + "_eval_p" + std::to_string(prefix) + ".ndjson");
        std::ofstream eval_out(eval.records_path, std::ios::trunc);
        if (!eval_out) {
            throw StoreError("accumulation: cannot write " + eval.records_path.string());
        }
        eval.summary = run_batch(eval_items, eval_config, gateway, templates, eval_out,
                                 options.parallelism);
        result.evaluations.push_back(std::move(eval));
    }

    result.final_pool_size = pool.size();
    return result;
}

}  // namespace dat

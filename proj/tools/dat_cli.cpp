// dat: demonstration-augmented translation pipeline CLI.
//
// Subcommands:
//   translate  one query through a configured pipeline mode
//   batch      a query file, with optional seed/eval accumulation split
//   pool       inspect and maintain a demonstration pool store
//   report     relevance/uniformity/length diagnostics over a record file
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dat/demo_pool.hpp"
#include "dat/errors.hpp"
#include "dat/eval_metrics.hpp"
#include "dat/llm_gateway.hpp"
#include "dat/pair_generation.hpp"
#include "dat/prompt_template.hpp"
#include "dat/translation_pipeline.hpp"

namespace {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Settings: built-in defaults < config file < environment < flags.

struct Settings {
    std::string mode = "dat";
    int m = 10;
    int k = 4;
    double lambda = 1.0;
    int shots = 4;
    std::string source_lang = "English";
    std::string target_lang;
    std::string model;
    double temperature = 0.1;
    int max_tokens = 1024;
    std::string endpoint;
    int retry_limit = 3;
    long backoff_ms = 250;
    std::string templates_dir;
    std::size_t top_n = 100;
    int parallel = 1;

    std::string config_file;
    std::vector<std::string> env_overrides;
    std::vector<std::string> flag_overrides;
};

std::string trim_copy(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

void apply_config_file(Settings& s, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw dat::ConfigError("config file: cannot open " + path);
    s.config_file = path;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string stripped = trim_copy(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw dat::ConfigError("config file line " + std::to_string(line_no) +
                                   ": expected key = value");
        }
        const std::string key = trim_copy(stripped.substr(0, eq));
        const std::string value = trim_copy(stripped.substr(eq + 1));
        try {
            if (key == "mode") s.mode = value;
            else if (key == "m") s.m = std::stoi(value);
            else if (key == "k") s.k = std::stoi(value);
            else if (key == "lambda") s.lambda = std::stod(value);
            else if (key == "shots") s.shots = std::stoi(value);
            else if (key == "source_lang") s.source_lang = value;
            else if (key == "target_lang") s.target_lang = value;
            else if (key == "model") s.model = value;
            else if (key == "temperature") s.temperature = std::stod(value);
            else if (key == "max_tokens") s.max_tokens = std::stoi(value);
            else if (key == "endpoint_url") s.endpoint = value;
            else if (key == "retry_limit") s.retry_limit = std::stoi(value);
            else if (key == "backoff_ms") s.backoff_ms = std::stol(value);
            else if (key == "templates_dir") s.templates_dir = value;
            else if (key == "top_n") s.top_n = static_cast<std::size_t>(std::stoul(value));
            else if (key == "parallel") s.parallel = std::stoi(value);
            else {
                throw dat::ConfigError("config file line " + std::to_string(line_no) +
                                       ": unknown key '" + key + "'");
            }
        } catch (const std::invalid_argument&) {
            throw dat::ConfigError("config file line " + std::to_string(line_no) +
                                   ": bad value for '" + key + "'");
        }
    }
}

void apply_environment(Settings& s) {
    if (const char* v = std::getenv("DAT_ENDPOINT_URL"); v != nullptr && *v != '\0') {
        s.endpoint = v;
        s.env_overrides.push_back("DAT_ENDPOINT_URL");
    }
    if (const char* v = std::getenv("DAT_MODEL"); v != nullptr && *v != '\0') {
        s.model = v;
        s.env_overrides.push_back("DAT_MODEL");
    }
    // DAT_AUTH_TOKEN is read at gateway construction and never stored here.
}

std::string auth_token_from_env() {
    const char* v = std::getenv("DAT_AUTH_TOKEN");
    return v == nullptr ? std::string{} : std::string(v);
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// ---------------------------------------------------------------------------
// Shared runtime construction.

std::vector<dat::DemonstrationPair> load_fixed_pairs(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw dat::ConfigError("fixed pairs: cannot open " + path);
    std::vector<dat::DemonstrationPair> pairs;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string stripped = trim_copy(line);
        if (stripped.empty()) continue;
        dat::DemonstrationPair pair;
        pair.provenance = dat::Provenance::fixed;
        if (stripped[0] == '{') {
            try {
                const json j = json::parse(stripped);
                pair.source = j.at("source").get<std::string>();
                pair.target = j.at("target").get<std::string>();
            } catch (const json::exception& e) {
                throw dat::ConfigError("fixed pairs " + path + " line " +
                                       std::to_string(line_no) + ": " + e.what());
            }
        } else {
            const auto tab = stripped.find('\t');
            if (tab == std::string::npos) {
                throw dat::ConfigError("fixed pairs " + path + " line " +
                                       std::to_string(line_no) +
                                       ": expected source<TAB>target or JSON object");
            }
            pair.source = trim_copy(stripped.substr(0, tab));
            pair.target = trim_copy(stripped.substr(tab + 1));
        }
        if (pair.source.empty() || pair.target.empty()) {
            throw dat::ConfigError("fixed pairs " + path + " line " + std::to_string(line_no) +
                                   ": both sides must be non-empty");
        }
        pairs.push_back(std::move(pair));
    }
    if (pairs.empty()) throw dat::ConfigError("fixed pairs " + path + ": file holds no pairs");
    return pairs;
}

struct GatewayChoice {
    std::string replay_store;
    std::string record_store;
};

std::shared_ptr<dat::ChatGateway> make_gateway(const Settings& s, const GatewayChoice& choice) {
    if (!choice.replay_store.empty()) {
        if (!std::filesystem::exists(choice.replay_store)) {
            throw dat::ConfigError("replay store not found: " + choice.replay_store);
        }
        return std::make_shared<dat::ReplayGateway>(
            dat::TranscriptStore::load(choice.replay_store));
    }
    dat::GatewayConfig gateway_config;
    gateway_config.endpoint_url = s.endpoint;
    gateway_config.auth_token = auth_token_from_env();
    gateway_config.retry_limit = s.retry_limit;
    gateway_config.backoff_base = std::chrono::milliseconds(s.backoff_ms);
    if (s.endpoint.empty()) {
        throw dat::ConfigError(
            "no endpoint configured; set --endpoint, DAT_ENDPOINT_URL or use --replay");
    }
    auto live = std::make_shared<dat::HttpGateway>(gateway_config);
    if (!choice.record_store.empty()) {
        return std::make_shared<dat::RecordingGateway>(live, choice.record_store);
    }
    return live;
}

dat::TemplateLibrary make_templates(const Settings& s) {
    if (s.templates_dir.empty()) return dat::TemplateLibrary::builtin();
    return dat::TemplateLibrary::from_directory(s.templates_dir);
}

dat::PipelineConfig make_pipeline_config(const Settings& s,
                                         std::vector<dat::DemonstrationPair> fixed_pairs,
                                         dat::DemonstrationPool* pool) {
    dat::PipelineConfig config;
    config.mode = dat::mode_from_name(s.mode);
    config.filter.m = s.m;
    config.filter.k = s.k;
    config.filter.lambda = s.lambda;
    config.langs = {s.source_lang, s.target_lang};
    config.fixed_pairs = std::move(fixed_pairs);
    config.pool = pool;
    config.shot_count = s.shots;
    config.retrieval_top_n = s.top_n;
    config.generation.temperature = s.temperature;
    config.generation.max_output_tokens = s.max_tokens;
    config.generation.model_name = s.model;
    config.validate();
    return config;
}

json settings_to_json(const Settings& s) {
    return {{"mode", s.mode},
            {"m", s.m},
            {"k", s.k},
            {"lambda", s.lambda},
            {"shots", s.shots},
            {"source_lang", s.source_lang},
            {"target_lang", s.target_lang},
            {"model", s.model},
            {"temperature", s.temperature},
            {"max_tokens", s.max_tokens},
            {"endpoint_url", s.endpoint},
            {"retry_limit", s.retry_limit},
            {"backoff_ms", s.backoff_ms},
            {"templates_dir", s.templates_dir},
            {"top_n", s.top_n},
            {"parallel", s.parallel}};
}

json summary_to_json(const dat::BatchSummary& summary) {
    // Wall-clock timing stays out: summary files must be reproducible.
    return {{"total", summary.total},
            {"succeeded", summary.succeeded},
            {"failed", summary.failed},
            {"calls", summary.calls},
            {"flags", summary.flag_counts}};
}

void print_summary(const std::string& label, const dat::BatchSummary& summary) {
    std::cerr << label << ": " << summary.succeeded << "/" << summary.total << " ok, "
              << summary.failed << " failed, " << summary.calls << " calls, wall "
              << static_cast<long>(summary.wall_ms) << " ms (generate "
              << static_cast<long>(summary.timing.generate_ms) << " ms, pair-translate "
              << static_cast<long>(summary.timing.translate_pairs_ms) << " ms, retrieve "
              << static_cast<long>(summary.timing.retrieve_ms) << " ms, final "
              << static_cast<long>(summary.timing.final_ms) << " ms)\n";
    for (const auto& [flag, count] : summary.flag_counts) {
        std::cerr << "  flag " << flag << ": " << count << "\n";
    }
}

void write_json_file(const std::filesystem::path& path, const json& j) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw dat::StoreError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// translate

struct TranslateArgs {
    std::string query;
    std::string fixed_pairs_path;
    std::string pool_path;
    std::string output;
    std::string manifest_path;
    GatewayChoice gateway;
};

int run_translate(const Settings& s, const TranslateArgs& args) {
    if (trim_copy(args.query).empty()) {
        throw dat::ConfigError("translate: --query must be non-empty");
    }

    std::vector<dat::DemonstrationPair> fixed;
    if (!args.fixed_pairs_path.empty()) fixed = load_fixed_pairs(args.fixed_pairs_path);

    std::shared_ptr<dat::DemonstrationPool> pool;
    if (!args.pool_path.empty()) {
        if (!std::filesystem::exists(args.pool_path)) {
            throw dat::ConfigError("pool store not found: " + args.pool_path);
        }
        pool = std::make_shared<dat::DemonstrationPool>(
            dat::DemonstrationPool::load(args.pool_path));
    }

    const auto config = make_pipeline_config(s, std::move(fixed), pool.get());
    const auto templates = make_templates(s);
    const auto gateway = make_gateway(s, args.gateway);

    const dat::TranslationRecord record =
        dat::translate(args.query, config, *gateway, templates);

    if (!args.output.empty()) {
        std::ofstream out(args.output, std::ios::trunc);
        if (!out) throw dat::StoreError("cannot write " + args.output);
        out << dat::record_to_json(record).dump() << '\n';
    }
    std::string manifest_path = args.manifest_path;
    if (manifest_path.empty() && !args.output.empty()) {
        manifest_path = args.output + ".manifest.json";
    }
    if (!manifest_path.empty()) {
        json manifest = {{"schema_version", 1},
                         {"command", "translate"},
                         {"created_utc", utc_timestamp()},
                         {"resolved", settings_to_json(s)},
                         {"config_file", s.config_file},
                         {"env_overrides", s.env_overrides},
                         {"flag_overrides", s.flag_overrides},
                         {"replay_store", args.gateway.replay_store},
                         {"record_store", args.gateway.record_store},
                         {"fixed_pairs", args.fixed_pairs_path},
                         {"pool", args.pool_path},
                         {"output", args.output}};
        write_json_file(manifest_path, manifest);
    }

    for (const auto& flag : record.flags) {
        std::cerr << "note: " << flag << "\n";
    }
    if (!record.ok()) {
        std::cerr << "error: " << record.error << "\n";
        return 1;
    }
    std::cout << record.hypothesis << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// batch

struct BatchArgs {
    std::string input;
    std::string output;
    std::string fixed_pairs_path;
    std::string pool_path;
    std::string split;          // "seed:500,eval:512"
    std::string seed_prefixes;  // "100,300,500"
    std::string from_manifest;
    GatewayChoice gateway;
};

std::pair<std::size_t, std::size_t> parse_split(const std::string& split) {
    std::size_t seed = 0, eval = 0;
    bool seed_seen = false, eval_seen = false;
    std::stringstream ss(split);
    std::string part;
    while (std::getline(ss, part, ',')) {
        const auto colon = part.find(':');
        if (colon == std::string::npos) {
            throw dat::ConfigError("--split expects seed:<n>,eval:<n>");
        }
        const std::string key = trim_copy(part.substr(0, colon));
        const std::string value = trim_copy(part.substr(colon + 1));
        try {
            if (key == "seed") {
                seed = std::stoul(value);
                seed_seen = true;
            } else if (key == "eval") {
                eval = std::stoul(value);
                eval_seen = true;
            } else {
                throw dat::ConfigError("--split: unknown part '" + key + "'");
            }
        } catch (const std::invalid_argument&) {
            throw dat::ConfigError("--split: bad count for '" + key + "'");
        }
    }
    if (!seed_seen || !eval_seen) {
        throw dat::ConfigError("--split expects both seed:<n> and eval:<n>");
    }
    return {seed, eval};
}

std::vector<std::size_t> parse_prefixes(const std::string& text) {
    std::vector<std::size_t> out;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ',')) {
        const std::string value = trim_copy(part);
        if (value.empty()) continue;
        try {
            out.push_back(std::stoul(value));
        } catch (const std::invalid_argument&) {
            throw dat::ConfigError("--seed-prefixes: bad value '" + value + "'");
        }
    }
    return out;
}

int run_batch_cmd(Settings& s, BatchArgs& args) {
    if (!args.from_manifest.empty()) {
        std::ifstream in(args.from_manifest);
        if (!in) throw dat::ConfigError("manifest not found: " + args.from_manifest);
        json manifest;
        try {
            in >> manifest;
        } catch (const json::exception& e) {
            throw dat::ConfigError("manifest " + args.from_manifest + ": " + e.what());
        }
        const json& resolved = manifest.at("resolved");
        s.mode = resolved.value("mode", s.mode);
        s.m = resolved.value("m", s.m);
        s.k = resolved.value("k", s.k);
        s.lambda = resolved.value("lambda", s.lambda);
        s.shots = resolved.value("shots", s.shots);
        s.source_lang = resolved.value("source_lang", s.source_lang);
        s.target_lang = resolved.value("target_lang", s.target_lang);
        s.model = resolved.value("model", s.model);
        s.temperature = resolved.value("temperature", s.temperature);
        s.max_tokens = resolved.value("max_tokens", s.max_tokens);
        s.endpoint = resolved.value("endpoint_url", s.endpoint);
        s.templates_dir = resolved.value("templates_dir", s.templates_dir);
        s.top_n = resolved.value("top_n", s.top_n);
        s.parallel = resolved.value("parallel", s.parallel);
        if (args.input.empty()) args.input = manifest.value("input", std::string{});
        if (args.output.empty()) args.output = manifest.value("output", std::string{});
        if (args.split.empty()) args.split = manifest.value("split", std::string{});
        if (args.seed_prefixes.empty()) {
            args.seed_prefixes = manifest.value("seed_prefixes", std::string{});
        }
        if (args.pool_path.empty()) args.pool_path = manifest.value("pool", std::string{});
        if (args.fixed_pairs_path.empty()) {
            args.fixed_pairs_path = manifest.value("fixed_pairs", std::string{});
        }
        if (args.gateway.replay_store.empty()) {
            args.gateway.replay_store = manifest.value("replay_store", std::string{});
        }
    }

    if (args.input.empty() || !std::filesystem::exists(args.input)) {
        throw dat::ConfigError("batch: input file not found: " + args.input);
    }
    if (args.output.empty()) throw dat::ConfigError("batch: --output is required");

    const auto items = dat::load_query_file(args.input);
    if (items.empty()) throw dat::ConfigError("batch: input file holds no queries");

    std::vector<dat::DemonstrationPair> fixed;
    if (!args.fixed_pairs_path.empty()) fixed = load_fixed_pairs(args.fixed_pairs_path);

    const auto templates = make_templates(s);
    const auto gateway = make_gateway(s, args.gateway);

    json manifest = {{"schema_version", 1},
                     {"command", "batch"},
                     {"created_utc", utc_timestamp()},
                     {"resolved", settings_to_json(s)},
                     {"config_file", s.config_file},
                     {"env_overrides", s.env_overrides},
                     {"flag_overrides", s.flag_overrides},
                     {"replay_store", args.gateway.replay_store},
                     {"record_store", args.gateway.record_store},
                     {"fixed_pairs", args.fixed_pairs_path},
                     {"pool", args.pool_path},
                     {"input", args.input},
                     {"output", args.output},
                     {"split", args.split},
                     {"seed_prefixes", args.seed_prefixes}};

    if (args.split.empty()) {
        std::shared_ptr<dat::DemonstrationPool> pool;
        if (!args.pool_path.empty() && std::filesystem::exists(args.pool_path)) {
            pool = std::make_shared<dat::DemonstrationPool>(
                dat::DemonstrationPool::load(args.pool_path));
        } else if (dat::mode_from_name(s.mode) == dat::PipelineMode::dat_accumulate) {
            throw dat::ConfigError("batch: mode dat-accumulate requires an existing --pool");
        }
        const auto config = make_pipeline_config(s, std::move(fixed), pool.get());

        std::ofstream out(args.output, std::ios::trunc);
        if (!out) throw dat::StoreError("cannot write " + args.output);
        const auto summary =
            dat::run_batch(items, config, *gateway, templates, out, s.parallel);
        print_summary("batch", summary);

        write_json_file(args.output + ".summary.json", summary_to_json(summary));
        write_json_file(args.output + ".manifest.json", manifest);
        // Individual failures are recorded per line; only configuration
        // errors fail the batch.
        return 0;
    }

    // Accumulation protocol: seed slice generates and fills the pool, eval
    // slice translates with retrieval only.
    const auto [seed_count, eval_count] = parse_split(args.split);
    if (seed_count + eval_count > items.size()) {
        throw dat::ConfigError("batch: split sizes exceed input line count (" +
                               std::to_string(items.size()) + ")");
    }
    if (eval_count == 0) throw dat::ConfigError("batch: eval split must be non-empty");
    if (seed_count + eval_count < items.size()) {
        std::cerr << "warning: split covers " << (seed_count + eval_count) << " of "
                  << items.size() << " input lines; the rest are unused\n";
    }
    if (args.pool_path.empty()) {
        throw dat::ConfigError("batch: --split requires --pool for the accumulated store");
    }

    auto pool = std::filesystem::exists(args.pool_path)
                    ? std::make_shared<dat::DemonstrationPool>(
                          dat::DemonstrationPool::load(args.pool_path))
                    : std::make_shared<dat::DemonstrationPool>();

    Settings eval_settings = s;
    eval_settings.mode = "dat_accumulate";
    const auto config = make_pipeline_config(eval_settings, std::move(fixed), pool.get());

    dat::AccumulationOptions options;
    options.parallelism = s.parallel;
    options.seed_prefixes = parse_prefixes(args.seed_prefixes);
    const std::filesystem::path output_path(args.output);
    options.output_dir =
        output_path.parent_path().empty() ? "." : output_path.parent_path();
    options.stem = output_path.stem().string();

    const std::span<const dat::QueryItem> seed_span(items.data(), seed_count);
    const std::span<const dat::QueryItem> eval_span(items.data() + seed_count, eval_count);
    const auto result = dat::accumulate_then_evaluate(seed_span, eval_span, config, *gateway,
                                                      templates, *pool, options);
    pool->persist(args.pool_path);

    print_summary("seed", result.seed_summary);
    json evaluations = json::array();
    for (const auto& eval : result.evaluations) {
        print_summary("eval@" + std::to_string(eval.seed_prefix), eval.summary);
        evaluations.push_back({{"seed_prefix", eval.seed_prefix},
                               {"pool_size", eval.pool_size},
                               {"records", eval.records_path.string()},
                               {"summary", summary_to_json(eval.summary)}});
    }
    std::cerr << "pool size: " << result.final_pool_size << " (" << result.pool_inserted_total
              << " inserted)\n";

    manifest["phases"] = {{"seed",
                           {{"indices", {{"begin", 0}, {"end", seed_count}}},
                            {"records", result.seed_records_path.string()}}},
                          {"eval",
                           {{"indices", {{"begin", seed_count}, {"end", seed_count + eval_count}}},
                            {"evaluations", evaluations}}}};
    json summary_json = {{"seed", summary_to_json(result.seed_summary)},
                         {"evaluations", evaluations},
                         {"pool_size", result.final_pool_size},
                         {"pool_inserted", result.pool_inserted_total}};
    write_json_file(args.output + ".summary.json", summary_json);
    write_json_file(args.output + ".manifest.json", manifest);
    return 0;
}

// ---------------------------------------------------------------------------
// pool

// Advisory lock held for the span of a pool command, so two concurrent CLI
// invocations cannot interleave a load-mutate-persist cycle.
class PoolLock {
public:
    explicit PoolLock(const std::string& pool_path) {
        const std::string lock_path = pool_path + ".lock";
        fd_ = ::open(lock_path.c_str(), O_CREAT | O_RDWR, 0644);
        if (fd_ < 0) throw dat::StoreError("pool lock: cannot open " + lock_path);
        if (::flock(fd_, LOCK_EX) != 0) {
            ::close(fd_);
            throw dat::StoreError("pool lock: flock failed for " + lock_path);
        }
    }
    ~PoolLock() {
        if (fd_ >= 0) {
            ::flock(fd_, LOCK_UN);
            ::close(fd_);
        }
    }

private:
    int fd_ = -1;
};

struct PoolArgs {
    std::string pool_path;
    std::string source, target, origin;
    std::string from_file;
    std::string query;
    std::size_t k = 4;
    std::size_t top_n = 100;
};

int run_pool_insert(const PoolArgs& args) {
    PoolLock lock(args.pool_path);
    auto pool = std::filesystem::exists(args.pool_path)
                    ? dat::DemonstrationPool::load(args.pool_path)
                    : dat::DemonstrationPool();
    std::size_t inserted = 0, duplicates = 0;
    if (!args.from_file.empty()) {
        for (const auto& pair : load_fixed_pairs(args.from_file)) {
            dat::DemonstrationPair p{pair.source, pair.target, dat::Provenance::generated};
            if (pool.insert(p, args.origin).inserted) {
                ++inserted;
            } else {
                ++duplicates;
            }
        }
    } else {
        if (args.source.empty() || args.target.empty()) {
            throw dat::ConfigError("pool insert: provide --source and --target, or --from");
        }
        dat::DemonstrationPair p{args.source, args.target, dat::Provenance::generated};
        if (pool.insert(p, args.origin).inserted) {
            ++inserted;
        } else {
            ++duplicates;
        }
    }
    pool.persist(args.pool_path);
    std::cout << "inserted " << inserted << ", duplicates skipped " << duplicates << ", size "
              << pool.size() << "\n";
    return 0;
}

int run_pool_query(const PoolArgs& args) {
    PoolLock lock(args.pool_path);
    const auto pool = dat::DemonstrationPool::load(args.pool_path);
    if (pool.size() == 0) {
        std::cerr << "warning: pool is empty\n";
        return 0;
    }
    const auto hits = pool.rbm25_retrieve_hits(args.query, args.top_n, args.k);
    std::ostringstream out;
    out.setf(std::ios::fixed);
    out.precision(6);
    for (std::size_t i = 0; i < hits.size(); ++i) {
        out << (i + 1) << ". bm25=" << hits[i].bm25 << " alpha=" << hits[i].alpha << " | "
            << hits[i].entry->pair.source << " => " << hits[i].entry->pair.target << "\n";
    }
    std::cout << out.str();
    return 0;
}

int run_pool_stats(const PoolArgs& args) {
    PoolLock lock(args.pool_path);
    const auto pool = dat::DemonstrationPool::load(args.pool_path);
    std::size_t min_len = 0, max_len = 0;
    long long total_len = 0;
    std::map<std::string, std::size_t> provenance_counts;
    bool first = true;
    for (const auto* entry : pool.entries()) {
        const auto len = entry->source_tokens.size();
        if (first || len < min_len) min_len = len;
        if (first || len > max_len) max_len = len;
        first = false;
        total_len += static_cast<long long>(len);
        ++provenance_counts[dat::provenance_name(entry->pair.provenance)];
    }
    std::cout << "size: " << pool.size() << "\n";
    if (pool.size() > 0) {
        std::cout << "source tokens: mean "
                  << static_cast<double>(total_len) / static_cast<double>(pool.size())
                  << ", min " << min_len << ", max " << max_len << "\n";
    }
    for (const auto& [name, count] : provenance_counts) {
        std::cout << "provenance " << name << ": " << count << "\n";
    }
    return 0;
}

int run_pool_verify(const PoolArgs& args) {
    PoolLock lock(args.pool_path);
    const auto pool = dat::DemonstrationPool::load(args.pool_path);
    std::string detail;
    if (!pool.verify_index(&detail)) {
        std::cerr << "pool verify: FAILED: " << detail << "\n";
        return 1;
    }
    std::cout << "pool verify: OK (" << pool.size() << " entries)\n";
    return 0;
}

// Rewrites the store from its surviving entries: drops exact duplicates and
// reassigns contiguous insert sequences.
int run_pool_compact(const PoolArgs& args) {
    PoolLock lock(args.pool_path);
    std::ifstream in(args.pool_path);
    if (!in) throw dat::StoreError("pool store: cannot open " + args.pool_path);
    dat::DemonstrationPool fresh;
    std::string line;
    std::size_t line_no = 0, dropped = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw dat::StoreError("pool store " + args.pool_path + " line " +
                                  std::to_string(line_no) + ": " + e.what());
        }
        if (!header_seen && j.contains("schema_version")) {
            header_seen = true;
            continue;
        }
        try {
            dat::DemonstrationPair pair;
            pair.source = j.at("source").get<std::string>();
            pair.target = j.at("target").get<std::string>();
            pair.provenance = dat::provenance_from_name(j.value("provenance", "generated"));
            if (!fresh.insert(pair, j.value("origin_query", std::string{})).inserted) {
                ++dropped;
            }
        } catch (const json::exception& e) {
            throw dat::StoreError("pool store " + args.pool_path + " line " +
                                  std::to_string(line_no) + ": " + e.what());
        }
    }
    fresh.persist(args.pool_path);
    std::cout << "compacted to " << fresh.size() << " entries, dropped " << dropped
              << " duplicates\n";
    return 0;
}

// ---------------------------------------------------------------------------
// report

struct ReportArgs {
    std::string records_path;
    std::string quality_cmd;
    std::string json_out;
};

// Runs the external scorer once over every demonstration pair: JSON lines
// {"source", "target"} on stdin, one numeric score per line on stdout.
class SubprocessScores {
public:
    SubprocessScores(const std::string& command,
                     const std::vector<dat::TranslationRecord>& records) {
        const auto dir = std::filesystem::temp_directory_path();
        const auto tag = std::to_string(::getpid());
        in_path_ = dir / ("dat_quality_in_" + tag + ".ndjson");
        out_path_ = dir / ("dat_quality_out_" + tag + ".txt");

        std::ofstream in_file(in_path_, std::ios::trunc);
        std::size_t pair_count = 0;
        for (const auto& rec : records) {
            for (const auto& d : rec.demonstrations_used) {
                in_file << json{{"source", d.source}, {"target", d.target}}.dump() << '\n';
                ++pair_count;
            }
        }
        in_file.close();

        const std::string shell = command + " < " + in_path_.string() + " > " +
                                  out_path_.string();
        const int status = std::system(shell.c_str());
        ok_ = status == 0;
        if (ok_) {
            std::ifstream out_file(out_path_);
            std::string line;
            while (std::getline(out_file, line)) {
                const std::string stripped = trim_copy(line);
                if (stripped.empty()) continue;
                try {
                    if (stripped[0] == '{') {
                        scores_.push_back(json::parse(stripped).at("score").get<double>());
                    } else {
                        scores_.push_back(std::stod(stripped));
                    }
                } catch (...) {
                    scores_.push_back(std::nullopt);
                }
            }
            ok_ = scores_.size() == pair_count;
        }
    }

    ~SubprocessScores() {
        std::error_code ec;
        std::filesystem::remove(in_path_, ec);
        std::filesystem::remove(out_path_, ec);
    }

    bool ok() const { return ok_; }
    const std::vector<std::optional<double>>& scores() const { return scores_; }

private:
    std::filesystem::path in_path_, out_path_;
    bool ok_ = false;
    std::vector<std::optional<double>> scores_;
};

class SequencedScorer : public dat::QualityScorer {
public:
    explicit SequencedScorer(const std::vector<std::optional<double>>& scores)
        : scores_(scores) {}

    std::optional<double> score(const std::string&, const std::string&) override {
        if (next_ >= scores_.size()) return std::nullopt;
        return scores_[next_++];
    }

private:
    const std::vector<std::optional<double>>& scores_;
    std::size_t next_ = 0;
};

int run_report(const ReportArgs& args) {
    if (!std::filesystem::exists(args.records_path)) {
        throw dat::ConfigError("report: record file not found: " + args.records_path);
    }
    const auto records = dat::load_records(args.records_path);

    const auto examples = dat::build_example_report(records);
    const auto lengths = dat::length_stats(records);

    std::optional<dat::QualityReport> quality;
    std::string quality_note;
    if (!args.quality_cmd.empty()) {
        SubprocessScores subprocess(args.quality_cmd, records);
        if (!subprocess.ok()) {
            std::cerr << "warning: quality scorer failed; Qual. column marked failed\n";
            quality_note = "failed";
        } else {
            SequencedScorer scorer(subprocess.scores());
            quality = dat::quality_metric(records, scorer);
            if (!quality.has_value()) quality_note = "failed";
        }
    }

    std::cout << dat::render_report_table(examples, lengths, quality, quality_note);
    if (!args.json_out.empty()) {
        write_json_file(args.json_out,
                        dat::report_to_json(examples, lengths, quality, quality_note));
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"demonstration-augmented translation pipeline"};
    app.require_subcommand(1);

    Settings settings;
    TranslateArgs translate_args;
    BatchArgs batch_args;
    PoolArgs pool_args;
    ReportArgs report_args;
    std::string config_path;

    const auto add_shared = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "key = value configuration file");
        cmd->add_option("--mode", settings.mode,
                        "zero-shot | few-shot | dat | dat-fixed | dat-accumulate");
        cmd->add_option("--m", settings.m, "source candidates to generate");
        cmd->add_option("--k", settings.k, "candidates kept after filtering");
        cmd->add_option("--lambda", settings.lambda, "diversity weight");
        cmd->add_option("--shots", settings.shots, "demonstrations in the final prompt");
        cmd->add_option("--source-lang", settings.source_lang, "source language name");
        cmd->add_option("--target-lang", settings.target_lang, "target language name");
        cmd->add_option("--model", settings.model, "model identifier sent to the endpoint");
        cmd->add_option("--temperature", settings.temperature, "sampling temperature");
        cmd->add_option("--max-tokens", settings.max_tokens, "completion token limit");
        cmd->add_option("--endpoint", settings.endpoint, "chat-completion endpoint URL");
        cmd->add_option("--retry-limit", settings.retry_limit, "transport retry budget");
        cmd->add_option("--templates", settings.templates_dir, "prompt template directory");
        cmd->add_option("--top-n", settings.top_n, "BM25 shortlist width for retrieval");
    };

    auto* cmd_translate = app.add_subcommand("translate", "translate one query");
    add_shared(cmd_translate);
    cmd_translate->add_option("--query", translate_args.query, "sentence to translate")
        ->required();
    cmd_translate->add_option("--fixed-pairs", translate_args.fixed_pairs_path,
                              "fixed pair file (TSV or JSON lines)");
    cmd_translate->add_option("--pool", translate_args.pool_path, "demonstration pool store");
    cmd_translate->add_option("--replay", translate_args.gateway.replay_store,
                              "serve responses from this transcript store");
    cmd_translate->add_option("--record", translate_args.gateway.record_store,
                              "append live exchanges to this transcript store");
    cmd_translate->add_option("--output", translate_args.output,
                              "write the full translation record here");
    cmd_translate->add_option("--manifest", translate_args.manifest_path,
                              "write a run manifest here");

    auto* cmd_batch = app.add_subcommand("batch", "translate a query file");
    add_shared(cmd_batch);
    cmd_batch->add_option("--input", batch_args.input, "query file, one per line");
    cmd_batch->add_option("--output", batch_args.output, "record file (JSON lines)");
    cmd_batch->add_option("--parallel", settings.parallel, "worker threads");
    cmd_batch->add_option("--fixed-pairs", batch_args.fixed_pairs_path, "fixed pair file");
    cmd_batch->add_option("--pool", batch_args.pool_path, "demonstration pool store");
    cmd_batch->add_option("--split", batch_args.split,
                          "seed:<n>,eval:<n> accumulation partition");
    cmd_batch->add_option("--seed-prefixes", batch_args.seed_prefixes,
                          "evaluate after these seed counts, e.g. 100,300,500");
    cmd_batch->add_option("--replay", batch_args.gateway.replay_store, "replay store");
    cmd_batch->add_option("--record", batch_args.gateway.record_store, "record store");
    cmd_batch->add_option("--from-manifest", batch_args.from_manifest,
                          "re-run the configuration captured in a manifest");

    auto* cmd_pool = app.add_subcommand("pool", "demonstration pool maintenance");
    cmd_pool->require_subcommand(1);
    auto* pool_insert = cmd_pool->add_subcommand("insert", "add pairs");
    auto* pool_query = cmd_pool->add_subcommand("query", "retrieve pairs for a query");
    auto* pool_stats = cmd_pool->add_subcommand("stats", "size and length distribution");
    auto* pool_verify = cmd_pool->add_subcommand("verify", "index rebuild equivalence check");
    auto* pool_compact = cmd_pool->add_subcommand("compact", "rewrite store, drop duplicates");
    for (auto* sub : {pool_insert, pool_query, pool_stats, pool_verify, pool_compact}) {
        sub->add_option("--pool", pool_args.pool_path, "pool store path")->required();
    }
    pool_insert->add_option("--source", pool_args.source, "source sentence");
    pool_insert->add_option("--target", pool_args.target, "target sentence");
    pool_insert->add_option("--origin", pool_args.origin, "originating query");
    pool_insert->add_option("--from", pool_args.from_file, "pair file (TSV or JSON lines)");
    pool_query->add_option("--q", pool_args.query, "query text")->required();
    pool_query->add_option("--k", pool_args.k, "pairs to return");
    pool_query->add_option("--top-n", pool_args.top_n, "BM25 shortlist width");

    auto* cmd_report = app.add_subcommand("report", "metrics over a record file");
    cmd_report->add_option("--records", report_args.records_path, "record file")->required();
    cmd_report->add_option("--quality-cmd", report_args.quality_cmd,
                           "external pair scorer (JSON lines in, scores out)");
    cmd_report->add_option("--json", report_args.json_out, "also write the report as JSON");

    // Precedence: defaults < config file < environment < flags. Flags are
    // captured before overlaying the lower layers, then reapplied.
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        CLI::App* active = app.get_subcommands().front();
        if (active == cmd_translate || active == cmd_batch) {
            const Settings flag_values = settings;
            Settings resolved;  // defaults
            if (!config_path.empty()) apply_config_file(resolved, config_path);
            apply_environment(resolved);
            const auto overlay = [&](const char* flag, auto member) {
                if (active->count(flag) > 0) {
                    resolved.*member = flag_values.*member;
                    resolved.flag_overrides.push_back(flag);
                }
            };
            overlay("--mode", &Settings::mode);
            overlay("--m", &Settings::m);
            overlay("--k", &Settings::k);
            overlay("--lambda", &Settings::lambda);
            overlay("--shots", &Settings::shots);
            overlay("--source-lang", &Settings::source_lang);
            overlay("--target-lang", &Settings::target_lang);
            overlay("--model", &Settings::model);
            overlay("--temperature", &Settings::temperature);
            overlay("--max-tokens", &Settings::max_tokens);
            overlay("--endpoint", &Settings::endpoint);
            overlay("--retry-limit", &Settings::retry_limit);
            overlay("--templates", &Settings::templates_dir);
            overlay("--top-n", &Settings::top_n);
            if (active == cmd_batch && active->count("--parallel") > 0) {
                resolved.parallel = flag_values.parallel;
                resolved.flag_overrides.push_back("--parallel");
            }
            // No-filtering runs (m == k) promote the shot budget to k when
            // --shots was left at its default, so every kept pair still
            // enters the final prompt.
            if (active->count("--shots") == 0 && resolved.k > resolved.shots &&
                dat::mode_from_name(resolved.mode) != dat::PipelineMode::zero_shot &&
                dat::mode_from_name(resolved.mode) != dat::PipelineMode::few_shot_fixed) {
                resolved.shots = resolved.k;
                resolved.flag_overrides.push_back("shots:auto-raised-to-k");
            }
            settings = resolved;
        }

        if (cmd_translate->parsed()) return run_translate(settings, translate_args);
        if (cmd_batch->parsed()) return run_batch_cmd(settings, batch_args);
        if (cmd_report->parsed()) return run_report(report_args);
        if (pool_insert->parsed()) return run_pool_insert(pool_args);
        if (pool_query->parsed()) return run_pool_query(pool_args);
        if (pool_stats->parsed()) return run_pool_stats(pool_args);
        if (pool_verify->parsed()) return run_pool_verify(pool_args);
        if (pool_compact->parsed()) return run_pool_compact(pool_args);
        throw dat::ConfigError("no subcommand selected");
    } catch (const dat::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

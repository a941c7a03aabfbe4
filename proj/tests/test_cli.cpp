// End-to-end checks against the built binary: exit-status discipline,
// replay-driven runs, pool maintenance, reporting.

#include <cstdlib>
#include <string>

#include "dat/demo_pool.hpp"
#include "dat/llm_gateway.hpp"
#include "dat/translation_pipeline.hpp"
#include "doctest.h"
#include "json.hpp"
#include "test_util.hpp"

using nlohmann::json;

namespace {

struct CliResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

CliResult run_cli(const std::string& args, const testutil::TempDir& dir) {
    const auto out_path = dir.file("cli_stdout.txt");
    const auto err_path = dir.file("cli_stderr.txt");
    const std::string command = std::string(DAT_CLI_PATH) + " " + args + " > " +
                                out_path.string() + " 2> " + err_path.string();
    const int status = std::system(command.c_str());
    CliResult result;
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    result.out = testutil::read_file(out_path);
    result.err = testutil::read_file(err_path);
    return result;
}

const dat::LangPair kLangs{"English", "Swahili"};

// Records a scripted run of the given queries/mode into a transcript store
// the CLI can replay. The CLI must be invoked with the same defaults.
void record_store(const std::filesystem::path& store_path,
                  const std::vector<std::string>& queries, dat::PipelineMode mode,
                  dat::DemonstrationPool* pool = nullptr) {
    auto scripted = std::make_shared<testutil::CallbackGateway>(
        [](const std::vector<dat::ChatMessage>& messages, const dat::GenerationParams&) {
            return testutil::scripted_response(messages, kLangs);
        });
    dat::RecordingGateway recorder(scripted, store_path);
    dat::PipelineConfig config;
    config.mode = mode;
    config.langs = kLangs;
    config.pool = pool;
    const auto templates = dat::TemplateLibrary::builtin();
    for (const auto& q : queries) {
        const auto record = dat::translate(q, config, recorder, templates);
        REQUIRE(record.ok());
    }
}

}  // namespace

TEST_CASE("help and usage errors") {
    testutil::TempDir dir("cli_help");
    CHECK(run_cli("--help", dir).exit_code == 0);
    CHECK(run_cli("", dir).exit_code == 2);                  // missing subcommand
    CHECK(run_cli("translate", dir).exit_code == 2);          // missing --query
    CHECK(run_cli("frobnicate", dir).exit_code == 2);         // unknown subcommand
    CHECK(run_cli("translate --query q --target-lang Swahili --mode nonsense", dir).exit_code ==
          2);
}

TEST_CASE("translate zero-shot against a replay store") {
    testutil::TempDir dir("cli_zero");
    const auto store = dir.file("store.ndjson");
    record_store(store, {"A lion walks."}, dat::PipelineMode::zero_shot);

    const auto result = run_cli("translate --query \"A lion walks.\" --mode zero-shot "
                                "--target-lang Swahili --replay " +
                                    store.string(),
                                dir);
    CHECK(result.exit_code == 0);
    CHECK(result.out.find("zz") == 0);  // scripted pseudo-translation
}

TEST_CASE("translate validation failures exit 2") {
    testutil::TempDir dir("cli_val");
    const auto result = run_cli(
        "translate --query q --mode dat-fixed --target-lang Swahili", dir);
    CHECK(result.exit_code == 2);
    CHECK(result.err.find("fixed pairs") != std::string::npos);

    CHECK(run_cli("translate --query q --mode dat", dir).exit_code == 2);  // no target lang
    CHECK(run_cli("translate --query \"  \" --mode zero-shot --target-lang Swahili", dir)
              .exit_code == 2);
}

TEST_CASE("live mode without endpoint or replay is a config error") {
    testutil::TempDir dir("cli_noend");
    const auto result =
        run_cli("translate --query q --mode zero-shot --target-lang Swahili", dir);
    CHECK(result.exit_code == 2);
    CHECK(result.err.find("endpoint") != std::string::npos);
}

TEST_CASE("replay miss is a runtime error (exit 1)") {
    testutil::TempDir dir("cli_miss");
    const auto store = dir.file("store.ndjson");
    record_store(store, {"Recorded query."}, dat::PipelineMode::zero_shot);
    const auto result = run_cli("translate --query \"Different query.\" --mode zero-shot "
                                "--target-lang Swahili --replay " +
                                    store.string(),
                                dir);
    CHECK(result.exit_code == 1);
    CHECK(result.err.find("unrecorded exchange") != std::string::npos);
}

TEST_CASE("m == k run reports the filtering bypass") {
    testutil::TempDir dir("cli_bypass");
    const auto store = dir.file("store.ndjson");
    {
        auto scripted = std::make_shared<testutil::CallbackGateway>(
            [](const std::vector<dat::ChatMessage>& messages, const dat::GenerationParams&) {
                return testutil::scripted_response(messages, kLangs);
            });
        dat::RecordingGateway recorder(scripted, store);
        dat::PipelineConfig config;
        config.mode = dat::PipelineMode::dat;
        config.langs = kLangs;
        config.filter.m = 4;
        config.filter.k = 4;
        dat::translate("rivers bend around old stones", config, recorder,
                       dat::TemplateLibrary::builtin());
    }
    const auto record_path = dir.file("record.ndjson");
    const auto result =
        run_cli("translate --query \"rivers bend around old stones\" --mode dat --m 4 --k 4 "
                "--target-lang Swahili --replay " +
                    store.string() + " --output " + record_path.string(),
                dir);
    CHECK(result.exit_code == 0);
    CHECK(result.err.find("filter_bypassed") != std::string::npos);
    const auto records = dat::load_records(record_path);
    REQUIRE(records.size() == 1);
    REQUIRE(records[0].selection_trace.has_value());
    CHECK(records[0].selection_trace->bypassed);
    CHECK(records[0].calls == 6);
}

TEST_CASE("batch runs, summary and manifest; parallel determinism") {
    testutil::TempDir dir("cli_batch");
    std::vector<std::string> queries;
    std::string input_text;
    for (int i = 0; i < 12; ++i) {
        queries.push_back("batch query number " + std::to_string(i) + " about lions");
        input_text += queries.back() + "\n";
    }
    const auto input = dir.file("queries.txt");
    testutil::write_file(input, input_text);
    const auto store = dir.file("store.ndjson");
    record_store(store, queries, dat::PipelineMode::dat);

    const auto out1 = dir.file("out1.ndjson");
    const auto out8 = dir.file("out8.ndjson");
    const std::string base_args = "batch --input " + input.string() +
                                  " --mode dat --target-lang Swahili --replay " +
                                  store.string();
    const auto r1 = run_cli(base_args + " --output " + out1.string() + " --parallel 1", dir);
    CHECK(r1.exit_code == 0);
    const auto r8 = run_cli(base_args + " --output " + out8.string() + " --parallel 8", dir);
    CHECK(r8.exit_code == 0);

    const auto bytes1 = testutil::read_file(out1);
    CHECK_FALSE(bytes1.empty());
    CHECK(bytes1 == testutil::read_file(out8));

    // Summary and manifest written alongside.
    const auto summary = json::parse(testutil::read_file(out1.string() + ".summary.json"));
    CHECK(summary.at("total") == 12);
    CHECK(summary.at("succeeded") == 12);
    const auto manifest = json::parse(testutil::read_file(out1.string() + ".manifest.json"));
    CHECK(manifest.at("resolved").at("mode") == "dat");
    CHECK(manifest.at("resolved").at("m") == 10);

    // Re-running from the manifest reproduces the records byte for byte.
    const auto out_m = dir.file("out_m.ndjson");
    const auto rm = run_cli("batch --from-manifest " + out1.string() + ".manifest.json" +
                                " --output " + out_m.string(),
                            dir);
    CHECK(rm.exit_code == 0);
    CHECK(testutil::read_file(out_m) == bytes1);
}

TEST_CASE("batch missing input exits 2") {
    testutil::TempDir dir("cli_noinput");
    const auto result = run_cli(
        "batch --input /nonexistent/file.txt --output x.ndjson --mode zero-shot "
        "--target-lang Swahili",
        dir);
    CHECK(result.exit_code == 2);
}

TEST_CASE("pool subcommands: insert, stats, query, verify, compact") {
    testutil::TempDir dir("cli_pool");
    const auto pool = dir.file("pool.ndjson");

    CHECK(run_cli("pool insert --pool " + pool.string() +
                      " --source \"a lion walks\" --target \"simba anatembea\"",
                  dir)
              .exit_code == 0);
    CHECK(run_cli("pool insert --pool " + pool.string() +
                      " --source \"the river bends\" --target \"mto unapinda\"",
                  dir)
              .exit_code == 0);
    // Duplicate insert is reported, not an error.
    const auto dup = run_cli("pool insert --pool " + pool.string() +
                                 " --source \"A LION walks!\" --target \"simba anatembea\"",
                             dir);
    CHECK(dup.exit_code == 0);
    CHECK(dup.out.find("duplicates skipped 1") != std::string::npos);

    const auto stats = run_cli("pool stats --pool " + pool.string(), dir);
    CHECK(stats.exit_code == 0);
    CHECK(stats.out.find("size: 2") != std::string::npos);

    const auto query = run_cli("pool query --pool " + pool.string() +
                                   " --q \"a lion walks tonight\" --k 2",
                               dir);
    CHECK(query.exit_code == 0);
    CHECK(query.out.find("bm25=") != std::string::npos);
    CHECK(query.out.find("alpha=") != std::string::npos);
    CHECK(query.out.find("a lion walks") != std::string::npos);

    const auto verify = run_cli("pool verify --pool " + pool.string(), dir);
    CHECK(verify.exit_code == 0);
    CHECK(verify.out.find("OK") != std::string::npos);

    const auto compact = run_cli("pool compact --pool " + pool.string(), dir);
    CHECK(compact.exit_code == 0);
    CHECK(dat::DemonstrationPool::load(pool).size() == 2);
}

TEST_CASE("pool query on an empty pool warns and exits 0") {
    testutil::TempDir dir("cli_poolempty");
    const auto pool = dir.file("pool.ndjson");
    dat::DemonstrationPool().persist(pool);
    const auto result = run_cli("pool query --pool " + pool.string() + " --q anything", dir);
    CHECK(result.exit_code == 0);
    CHECK(result.err.find("empty") != std::string::npos);
    CHECK(result.out.empty());
}

TEST_CASE("pool corrupt store exits 1 with a line diagnostic") {
    testutil::TempDir dir("cli_poolbad");
    const auto pool = dir.file("pool.ndjson");
    testutil::write_file(pool,
                         "{\"schema_version\": 1, \"tokenizer\": \"unicode-lower-alnum-v1\", "
                         "\"entries\": 1}\n{broken json\n");
    const auto result = run_cli("pool verify --pool " + pool.string(), dir);
    CHECK(result.exit_code == 1);
    CHECK(result.err.find("line 2") != std::string::npos);
}

TEST_CASE("report renders the table and honors --quality-cmd") {
    testutil::TempDir dir("cli_report");
    // Build a small record file through the library.
    const auto records_path = dir.file("records.ndjson");
    {
        auto gateway = testutil::make_scripted_gateway(kLangs);
        dat::PipelineConfig config;
        config.mode = dat::PipelineMode::dat;
        config.langs = kLangs;
        std::ofstream out(records_path);
        const std::vector<dat::QueryItem> items{{"lions walk the dry plains", {}},
                                                {"rivers carve the deep stone", {}}};
        dat::run_batch(items, config, gateway, dat::TemplateLibrary::builtin(), out, 1);
    }

    const auto plain = run_cli("report --records " + records_path.string(), dir);
    CHECK(plain.exit_code == 0);
    CHECK(plain.out.find("Relev.") != std::string::npos);
    CHECK(plain.out.find("n/a") != std::string::npos);

    // A scorer that emits 0.5 per pair.
    const auto scorer = dir.file("scorer.sh");
    testutil::write_file(scorer, "#!/bin/sh\nawk '{print 0.5}'\n");
    std::filesystem::permissions(scorer, std::filesystem::perms::owner_all);
    const auto json_out = dir.file("report.json");
    const auto scored = run_cli("report --records " + records_path.string() +
                                    " --quality-cmd " + scorer.string() + " --json " +
                                    json_out.string(),
                                dir);
    CHECK(scored.exit_code == 0);
    CHECK(scored.out.find("50.0") != std::string::npos);
    const auto j = json::parse(testutil::read_file(json_out));
    CHECK(j.at("quality").at("scored") == 8);  // 2 records x 4 pairs

    // A failing scorer degrades gracefully.
    const auto failing = run_cli("report --records " + records_path.string() +
                                     " --quality-cmd false",
                                 dir);
    CHECK(failing.exit_code == 0);
    CHECK(failing.out.find("failed") != std::string::npos);
    CHECK(failing.err.find("warning") != std::string::npos);

    // Malformed record file names the offending line, exit 1.
    const auto bad = dir.file("bad.ndjson");
    testutil::write_file(bad, "{\"query\": \"q\"}\nnot json\n");
    const auto broken = run_cli("report --records " + bad.string(), dir);
    CHECK(broken.exit_code == 1);
    CHECK(broken.err.find("line 2") != std::string::npos);
}

TEST_CASE("config file and environment feed settings, flags win") {
    testutil::TempDir dir("cli_config");
    const auto store = dir.file("store.ndjson");
    record_store(store, {"A lion walks."}, dat::PipelineMode::zero_shot);

    const auto config = dir.file("dat.conf");
    testutil::write_file(config,
                         "# comment\nmode = zero-shot\ntarget_lang = Swahili\nshots = 2\n");
    const auto result = run_cli("translate --query \"A lion walks.\" --config " +
                                    config.string() + " --replay " + store.string(),
                                dir);
    CHECK(result.exit_code == 0);

    const auto bad_key = dir.file("bad.conf");
    testutil::write_file(bad_key, "nonsense_key = 1\n");
    CHECK(run_cli("translate --query q --config " + bad_key.string(), dir).exit_code == 2);
}

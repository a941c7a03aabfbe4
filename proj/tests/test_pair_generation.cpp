#include "dat/pair_generation.hpp"

#include <numeric>

#include "dat/errors.hpp"
#include "doctest.h"
#include "test_util.hpp"

using dat::DemonstrationPair;
using dat::LangPair;
using testutil::CallbackGateway;

namespace {

const LangPair kLangs{"English", "Swahili"};
const dat::TemplateLibrary kTemplates = dat::TemplateLibrary::builtin();

dat::GenerationContext context_for(dat::ChatGateway& gateway) {
    return {gateway, kTemplates, kLangs, dat::GenerationParams{}};
}

}  // namespace

TEST_CASE("parse_candidate_lines handles list shapes") {
    CHECK(dat::parse_candidate_lines("1. Alpha\n2. Beta\n3. Gamma") ==
          std::vector<std::string>{"Alpha", "Beta", "Gamma"});
    CHECK(dat::parse_candidate_lines("- Alpha\n- Beta") ==
          std::vector<std::string>{"Alpha", "Beta"});
    CHECK(dat::parse_candidate_lines("* Alpha\n* Beta") ==
          std::vector<std::string>{"Alpha", "Beta"});
    CHECK(dat::parse_candidate_lines("\xE2\x80\xA2 Alpha") ==
          std::vector<std::string>{"Alpha"});
    CHECK(dat::parse_candidate_lines("1) Alpha\n2] Beta\n3: Gamma") ==
          std::vector<std::string>{"Alpha", "Beta", "Gamma"});
    // Preamble and epilogue around a marked list are dropped.
    CHECK(dat::parse_candidate_lines(
              "Here are your sentences:\n1. Alpha\n2. Beta\nHope this helps!") ==
          std::vector<std::string>{"Alpha", "Beta"});
    // Without any marker, every non-empty line counts.
    CHECK(dat::parse_candidate_lines("Alpha\n\nBeta\n") ==
          std::vector<std::string>{"Alpha", "Beta"});
    CHECK(dat::parse_candidate_lines("") == std::vector<std::string>{});
    CHECK(dat::parse_candidate_lines("\n\n  \n") == std::vector<std::string>{});
}

TEST_CASE("parse_candidate_lines strips surrounding quotes") {
    CHECK(dat::parse_candidate_lines("1. \"Alpha beta\"\n2. 'Gamma'") ==
          std::vector<std::string>{"Alpha beta", "Gamma"});
    CHECK(dat::parse_candidate_lines("1. \xE2\x80\x9C" "Curly\xE2\x80\x9D") ==
          std::vector<std::string>{"Curly"});
    // Unbalanced quotes stay.
    CHECK(dat::parse_candidate_lines("1. \"Half open") ==
          std::vector<std::string>{"\"Half open"});
}

TEST_CASE("parse is idempotent over its own output") {
    const std::vector<std::string> fixtures{
        "1. The cat sat.\n2. A dog ran fast.\n3. Birds fly south.",
        "- First line\n- Second line",
        "Intro text\n1. Only this\n2. And this",
        "Plain one\nPlain two",
    };
    for (const auto& raw : fixtures) {
        const auto once = dat::parse_candidate_lines(raw);
        std::string joined;
        for (std::size_t i = 0; i < once.size(); ++i) {
            if (i > 0) joined += '\n';
            joined += once[i];
        }
        CHECK(dat::parse_candidate_lines(joined) == once);
    }
}

TEST_CASE("render_demonstrations formats numbered blocks") {
    CHECK(dat::render_demonstrations({}, kLangs).empty());
    const std::vector<DemonstrationPair> pairs{{"src one", "tgt one", {}},
                                               {"src two", "tgt two", {}}};
    const std::string block = dat::render_demonstrations(pairs, kLangs);
    CHECK(block == "Example 1:\nEnglish: src one\nSwahili: tgt one\n\n"
                   "Example 2:\nEnglish: src two\nSwahili: tgt two\n\n");
}

TEST_CASE("generate_sources dedups and drops the query itself") {
    std::vector<std::string> prompts;
    CallbackGateway gateway([&](const std::vector<dat::ChatMessage>& messages,
                                const dat::GenerationParams&) {
        prompts.push_back(messages.back().content);
        return "1. A lion walks.\n2. A lion walks!\n3. The river bends.\n4. Some lions walk.";
    });
    const auto ctx = context_for(gateway);
    const auto candidates = dat::generate_sources(ctx, "A lion walks", 3);

    // "A lion walks!" normalizes to the query and to candidate 1: both drop.
    REQUIRE(candidates.size() == 2);
    CHECK(candidates[0].text == "The river bends.");
    CHECK(candidates[0].origin_index == 2);
    CHECK(candidates[1].text == "Some lions walk.");
    CHECK(candidates[0].tokens == dat::tokenize("The river bends."));

    REQUIRE(prompts.size() == 1);
    CHECK(prompts[0].find("Write 3 English sentences") != std::string::npos);
    CHECK(prompts[0].find("Sentence: A lion walks") != std::string::npos);
}

TEST_CASE("generate_sources asks for exactly m sentences") {
    std::string seen_prompt;
    CallbackGateway gateway([&](const std::vector<dat::ChatMessage>& messages,
                                const dat::GenerationParams&) {
        seen_prompt = messages.back().content;
        return "1. one thing\n2. two things";
    });
    const auto ctx = context_for(gateway);
    dat::generate_sources(ctx, "a query", 10);
    CHECK(seen_prompt.find("Write 10 ") != std::string::npos);
}

TEST_CASE("generate_sources retries once then fails with the raw response") {
    int calls = 0;
    CallbackGateway gateway(
        [&](const std::vector<dat::ChatMessage>&, const dat::GenerationParams&) {
            ++calls;
            return "   \n\n  ";  // nothing parseable
        });
    const auto ctx = context_for(gateway);
    std::uint64_t counted = 0;
    try {
        dat::generate_sources(ctx, "q sentence", 5, &counted);
        FAIL("expected GenerationError");
    } catch (const dat::GenerationError& e) {
        CHECK(e.raw_response() == "   \n\n  ");
    }
    CHECK(calls == 2);
    CHECK(counted == 2);
}

TEST_CASE("translate_source returns the first non-empty line") {
    CallbackGateway gateway(
        [](const std::vector<dat::ChatMessage>&, const dat::GenerationParams&) {
            return "\n  \nSimba anatembea.\nsecond line ignored";
        });
    const auto ctx = context_for(gateway);
    const auto pair = dat::translate_source(ctx, "A lion walks.");
    CHECK(pair.source == "A lion walks.");
    CHECK(pair.target == "Simba anatembea.");
    CHECK(pair.provenance == dat::Provenance::generated);
}

TEST_CASE("translate_source places fixed pairs before the source") {
    std::string seen_prompt;
    CallbackGateway gateway([&](const std::vector<dat::ChatMessage>& messages,
                                const dat::GenerationParams&) {
        seen_prompt = messages.back().content;
        return "tafsiri";
    });
    const auto ctx = context_for(gateway);
    const std::vector<DemonstrationPair> fixed{
        {"f1", "t1", dat::Provenance::fixed},
        {"f2", "t2", dat::Provenance::fixed},
        {"f3", "t3", dat::Provenance::fixed},
        {"f4", "t4", dat::Provenance::fixed},
    };
    dat::translate_source(ctx, "the source", fixed);

    std::size_t blocks = 0;
    for (std::size_t pos = 0; (pos = seen_prompt.find("Example ", pos)) != std::string::npos;
         pos += 8) {
        ++blocks;
    }
    CHECK(blocks == 4);
    CHECK(seen_prompt.find("English: f1") < seen_prompt.find("English: the source"));
}

TEST_CASE("translate_source always issues the call, even for a fixed-pair source") {
    int calls = 0;
    CallbackGateway gateway(
        [&](const std::vector<dat::ChatMessage>&, const dat::GenerationParams&) {
            ++calls;
            return "fresh translation";
        });
    const auto ctx = context_for(gateway);
    const std::vector<DemonstrationPair> fixed{{"same source", "cached target",
                                                dat::Provenance::fixed}};
    const auto pair = dat::translate_source(ctx, "same source", fixed);
    CHECK(calls == 1);
    CHECK(pair.target == "fresh translation");  // no lookup short-circuit
}

TEST_CASE("translate_source retries empty translations then fails naming the source") {
    int calls = 0;
    CallbackGateway gateway(
        [&](const std::vector<dat::ChatMessage>&, const dat::GenerationParams&) {
            ++calls;
            return "\n\n   ";
        });
    const auto ctx = context_for(gateway);
    CHECK_THROWS_WITH_AS(dat::translate_source(ctx, "lost sentence"),
                         doctest::Contains("lost sentence"), dat::GenerationError);
    CHECK(calls == 2);
    CHECK_THROWS_AS(dat::translate_source(ctx, "   "), dat::ConfigError);
}

TEST_CASE("build_demonstrations runs generate, filter, translate") {
    auto gateway = testutil::make_scripted_gateway(kLangs);
    const auto ctx = context_for(gateway);
    dat::FilterConfig filter;  // m=10, k=4, lambda=1

    const auto build = dat::build_demonstrations(ctx, "the quick brown fox jumps", filter);
    CHECK(build.candidates.size() == 10);
    REQUIRE(build.pairs.size() == 4);
    CHECK(build.generation_calls == 1);
    CHECK(build.translation_calls == 4);
    CHECK(gateway.call_count() == 5);
    CHECK_FALSE(build.trace.bypassed);
    CHECK(build.trace.selected.size() == 4);

    // Pairs come back in selection order, sources verbatim from candidates.
    for (std::size_t i = 0; i < build.pairs.size(); ++i) {
        const auto idx = build.trace.selected[i];
        CHECK(build.pairs[i].source == build.candidates[idx].text);
        CHECK(build.pairs[i].target == testutil::scripted_translation(build.pairs[i].source));
    }
}

TEST_CASE("m == k bypasses filtering and keeps generation order") {
    auto gateway = testutil::make_scripted_gateway(kLangs);
    const auto ctx = context_for(gateway);
    dat::FilterConfig filter;
    filter.m = 4;
    filter.k = 4;

    const auto build = dat::build_demonstrations(ctx, "rivers run deep tonight", filter);
    CHECK(build.trace.bypassed);
    CHECK(build.trace.step_scores.empty());
    REQUIRE(build.pairs.size() == 4);
    CHECK(build.trace.selected == std::vector<std::size_t>{0, 1, 2, 3});
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(build.pairs[i].source == build.candidates[i].text);
    }
}

TEST_CASE("candidate shortfall is flagged, not fatal") {
    CallbackGateway gateway([](const std::vector<dat::ChatMessage>& messages,
                               const dat::GenerationParams&) -> std::string {
        if (messages.back().content.find("numbered list") != std::string::npos) {
            return "1. only option here\n2. only option here";  // dedups to one
        }
        return "toka";
    });
    const auto ctx = context_for(gateway);
    dat::FilterConfig filter;
    filter.m = 6;
    filter.k = 3;

    const auto build = dat::build_demonstrations(ctx, "plenty of words", filter);
    CHECK(build.pairs.size() == 1);
    CHECK(build.trace.shortfall);
    CHECK(build.translation_calls == 1);
}

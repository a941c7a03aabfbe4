#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dat/translation_pipeline.hpp"

#include "json.hpp"

namespace dat {

struct PerQueryScores {
    std::size_t record_index = 0;
    std::size_t demo_count = 0;
    double relevance_x100 = 0.0;                 // mean alpha(query, demo source) x100
    std::optional<double> uniformity_x100;        // mean pairwise alpha x100; needs >= 2 demos
};

// Diagnostics over the demonstration sets of a record file: how close the
// sources sit to their queries (relevance) and to one another (uniformity),
// both on the x100 reporting scale.
struct ExampleSetReport {
    double relevance_x100 = 0.0;
    double uniformity_x100 = 0.0;
    double relevance_raw = 0.0;
    double uniformity_raw = 0.0;
    std::size_t relevance_included = 0;
    std::size_t relevance_excluded = 0;  // records without demonstrations
    std::size_t uniformity_included = 0;
    std::size_t uniformity_excluded = 0;  // records with fewer than 2 demonstrations
    std::vector<PerQueryScores> per_query;
    std::map<std::size_t, std::size_t> example_count_histogram;
};

ExampleSetReport build_example_report(std::span<const TranslationRecord> records);
double relevance_metric(std::span<const TranslationRecord> records);   // x100
double uniformity_metric(std::span<const TranslationRecord> records);  // x100

struct LengthStats {
    double mean_tokens = 0.0;
    std::map<std::string, double> quantiles;  // min, p25, p50, p75, p90, max
    double repeated_string_rate = 0.0;        // fraction of hypotheses with a looping 4-gram
    std::size_t counted = 0;
    std::size_t skipped = 0;  // records without a hypothesis
};

// True when some token 4-gram occurs >= 3 times back to back, the signature
// of a model stuck repeating itself.
bool has_repeated_ngram(const TokenSequence& tokens, std::size_t n = 4,
                        std::size_t min_repeats = 3);

LengthStats length_stats(std::span<const TranslationRecord> records);

// Pair quality scoring is delegated to the caller (a learned metric, a
// heuristic, a subprocess); the report only aggregates.
class QualityScorer {
public:
    virtual ~QualityScorer() = default;
    virtual std::optional<double> score(const std::string& source,
                                        const std::string& target) = 0;
};

struct QualityReport {
    double mean_x100 = 0.0;
    std::size_t scored = 0;
    std::size_t failed = 0;
};

// Scores every demonstration pair across the records. Returns nullopt when
// nothing could be scored.
std::optional<QualityReport> quality_metric(std::span<const TranslationRecord> records,
                                            QualityScorer& scorer);

// Output-language checking is likewise injected; the library ships no
// detector.
class LanguageDetector {
public:
    virtual ~LanguageDetector() = default;
    virtual std::string detect(const std::string& text) = 0;
};

struct OffTargetReport {
    double rate = 0.0;
    std::size_t checked = 0;
    std::size_t off_target = 0;
};

OffTargetReport off_target_rate(std::span<const TranslationRecord> records,
                                LanguageDetector& detector, const std::string& expected_lang);

// Aligned plain-text table (Relev. / Uni. / Qual. columns) plus the length
// block, and the same content as JSON.
std::string render_report_table(const ExampleSetReport& examples, const LengthStats& lengths,
                                const std::optional<QualityReport>& quality,
                                const std::string& quality_note = {});
nlohmann::json report_to_json(const ExampleSetReport& examples, const LengthStats& lengths,
                              const std::optional<QualityReport>& quality,
                              const std::string& quality_note = {});

}  // namespace dat

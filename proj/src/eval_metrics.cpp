#include "dat/eval_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dat {

namespace {

std::string format_fixed(double value, int decimals) {
    std::ostringstream out;
    out.setf(std::ios::fixed);
    out.precision(decimals);
    out << value;
    return out.str();
}

double quantile_nearest_rank(const std::vector<std::size_t>& sorted, double p) {
    if (sorted.empty()) return 0.0;
    const auto n = static_cast<double>(sorted.size());
    auto rank = static_cast<std::size_t>(std::ceil(p * n));
    if (rank == 0) rank = 1;
    if (rank > sorted.size()) rank = sorted.size();
    return static_cast<double>(sorted[rank - 1]);
}

}  // namespace

ExampleSetReport build_example_report(std::span<const TranslationRecord> records) {
    ExampleSetReport report;
    double relevance_sum = 0.0;
    double uniformity_sum = 0.0;

    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& rec = records[i];
        ++report.example_count_histogram[rec.demonstrations_used.size()];

        if (rec.demonstrations_used.empty()) {
            ++report.relevance_excluded;
            ++report.uniformity_excluded;
            continue;
        }

        const ProfileSet query_profiles{tokenize(rec.query)};
        std::vector<ProfileSet> sources;
        sources.reserve(rec.demonstrations_used.size());
        for (const auto& d : rec.demonstrations_used) {
            sources.emplace_back(tokenize(d.source));
        }

        PerQueryScores pq;
        pq.record_index = i;
        pq.demo_count = sources.size();

        double rel = 0.0;
        for (const auto& s : sources) rel += alpha(query_profiles, s);
        rel /= static_cast<double>(sources.size());
        pq.relevance_x100 = rel * 100.0;
        relevance_sum += rel;
        ++report.relevance_included;

        if (sources.size() >= 2) {
            // Mean over ordered pairs i != j; alpha is asymmetric, so both
            // directions enter.
            double uni = 0.0;
            for (std::size_t a = 0; a < sources.size(); ++a) {
                for (std::size_t b = 0; b < sources.size(); ++b) {
                    if (a == b) continue;
                    uni += alpha(sources[a], sources[b]);
                }
            }
            uni /= static_cast<double>(sources.size() * (sources.size() - 1));
            pq.uniformity_x100 = uni * 100.0;
            uniformity_sum += uni;
            ++report.uniformity_included;
        } else {
            ++report.uniformity_excluded;
        }

        report.per_query.push_back(std::move(pq));
    }

    if (report.relevance_included > 0) {
        report.relevance_raw = relevance_sum / static_cast<double>(report.relevance_included);
        report.relevance_x100 = report.relevance_raw * 100.0;
    }
    if (report.uniformity_included > 0) {
        report.uniformity_raw = uniformity_sum / static_cast<double>(report.uniformity_included);
        report.uniformity_x100 = report.uniformity_raw * 100.0;
    }
    return report;
}

double relevance_metric(std::span<const TranslationRecord> records) {
    return build_example_report(records).relevance_x100;
}

double uniformity_metric(std::span<const TranslationRecord> records) {
    return build_example_report(records).uniformity_x100;
}

bool has_repeated_ngram(const TokenSequence& tokens, std::size_t n, std::size_t min_repeats) {
    if (n == 0 || min_repeats < 2) return false;
    const std::size_t span_needed = n * min_repeats;
    if (tokens.size() < span_needed) return false;
    for (std::size_t start = 0; start + span_needed <= tokens.size(); ++start) {
        bool looping = true;
        for (std::size_t d = 0; d < n * (min_repeats - 1); ++d) {
            if (tokens[start + d] != tokens[start + d + n]) {
                looping = false;
                break;
            }
        }
        if (looping) return true;
    }
    return false;
}

LengthStats length_stats(std::span<const TranslationRecord> records) {
    LengthStats stats;
    std::vector<std::size_t> counts;
    std::size_t flagged = 0;
    for (const auto& rec : records) {
        if (rec.hypothesis.empty()) {
            ++stats.skipped;
            continue;
        }
        const TokenSequence tokens = tokenize(rec.hypothesis);
        counts.push_back(tokens.size());
        if (has_repeated_ngram(tokens)) ++flagged;
    }
    stats.counted = counts.size();
    if (counts.empty()) return stats;

    double sum = 0.0;
    for (const auto c : counts) sum += static_cast<double>(c);
    stats.mean_tokens = sum / static_cast<double>(counts.size());
    stats.repeated_string_rate =
        static_cast<double>(flagged) / static_cast<double>(counts.size());

    std::sort(counts.begin(), counts.end());
    stats.quantiles["min"] = static_cast<double>(counts.front());
    stats.quantiles["p25"] = quantile_nearest_rank(counts, 0.25);
    stats.quantiles["p50"] = quantile_nearest_rank(counts, 0.50);
    stats.quantiles["p75"] = quantile_nearest_rank(counts, 0.75);
    stats.quantiles["p90"] = quantile_nearest_rank(counts, 0.90);
    stats.quantiles["max"] = static_cast<double>(counts.back());
    return stats;
}

std::optional<QualityReport> quality_metric(std::span<const TranslationRecord> records,
                                            QualityScorer& scorer) {
    QualityReport report;
    double sum = 0.0;
    for (const auto& rec : records) {
        for (const auto& d : rec.demonstrations_used) {
            const auto score = scorer.score(d.source, d.target);
            if (score.has_value()) {
                sum += *score;
                ++report.scored;
            } else {
                ++report.failed;
            }
        }
    }
    if (report.scored == 0) return std::nullopt;
    report.mean_x100 = sum / static_cast<double>(report.scored) * 100.0;
    return report;
}

OffTargetReport off_target_rate(std::span<const TranslationRecord> records,
                                LanguageDetector& detector, const std::string& expected_lang) {
    OffTargetReport report;
    for (const auto& rec : records) {
        if (rec.hypothesis.empty()) continue;
        ++report.checked;
        if (detector.detect(rec.hypothesis) != expected_lang) ++report.off_target;
    }
    if (report.checked > 0) {
        report.rate = static_cast<double>(report.off_target) /
                      static_cast<double>(report.checked);
    }
    return report;
}

std::string render_report_table(const ExampleSetReport& examples, const LengthStats& lengths,
                                const std::optional<QualityReport>& quality,
                                const std::string& quality_note) {
    std::ostringstream out;
    const std::string qual = quality.has_value()
                                 ? format_fixed(quality->mean_x100, 1)
                                 : (quality_note.empty() ? "n/a" : quality_note);
    out << "Relev.  Uni.    Qual.\n";
    out << format_fixed(examples.relevance_x100, 1) << "    "
        << format_fixed(examples.uniformity_x100, 1) << "    " << qual << "\n";
    out << "\n";
    out << "records with demonstrations: " << examples.relevance_included
        << " (excluded: " << examples.relevance_excluded << ")\n";
    out << "records with >=2 demonstrations: " << examples.uniformity_included
        << " (excluded: " << examples.uniformity_excluded << ")\n";
    out << "\n";
    out << "output tokens: mean " << format_fixed(lengths.mean_tokens, 1);
    for (const auto& key : {"min", "p25", "p50", "p75", "p90", "max"}) {
        const auto it = lengths.quantiles.find(key);
        if (it != lengths.quantiles.end()) {
            out << "  " << key << " " << format_fixed(it->second, 0);
        }
    }
    out << "\n";
    out << "repeated-string rate: " << format_fixed(lengths.repeated_string_rate * 100.0, 1)
        << "% over " << lengths.counted << " hypotheses (skipped: " << lengths.skipped
        << ")\n";
    return out.str();
}

nlohmann::json report_to_json(const ExampleSetReport& examples, const LengthStats& lengths,
                              const std::optional<QualityReport>& quality,
                              const std::string& quality_note) {
    nlohmann::json per_query = nlohmann::json::array();
    for (const auto& pq : examples.per_query) {
        nlohmann::json row = {{"record_index", pq.record_index},
                              {"demo_count", pq.demo_count},
                              {"relevance", pq.relevance_x100}};
        row["uniformity"] =
            pq.uniformity_x100.has_value() ? nlohmann::json(*pq.uniformity_x100)
                                           : nlohmann::json();
        per_query.push_back(std::move(row));
    }
    nlohmann::json histogram = nlohmann::json::object();
    for (const auto& [count, freq] : examples.example_count_histogram) {
        histogram[std::to_string(count)] = freq;
    }
    nlohmann::json j = {
        {"relevance", examples.relevance_x100},
        {"uniformity", examples.uniformity_x100},
        {"relevance_raw", examples.relevance_raw},
        {"uniformity_raw", examples.uniformity_raw},
        {"relevance_included", examples.relevance_included},
        {"relevance_excluded", examples.relevance_excluded},
        {"uniformity_included", examples.uniformity_included},
        {"uniformity_excluded", examples.uniformity_excluded},
        {"example_count_histogram", histogram},
        {"per_query", per_query},
        {"length", {{"mean_tokens", lengths.mean_tokens},
                    {"quantiles", lengths.quantiles},
                    {"repeated_string_rate", lengths.repeated_string_rate},
                    {"counted", lengths.counted},
                    {"skipped", lengths.skipped}}},
    };
    if (quality.has_value()) {
        j["quality"] = {{"mean", quality->mean_x100},
                        {"scored", quality->scored},
                        {"failed", quality->failed}};
    } else {
        j["quality"] = quality_note.empty() ? "n/a" : quality_note;
    }
    return j;
}

}  // namespace dat

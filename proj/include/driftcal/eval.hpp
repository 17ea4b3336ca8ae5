#pragma once

// Ordered domain-pair evaluation: calibrate on one domain, test on another,
// record empirical coverage and average set size per method.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "driftcal/conformal.hpp"
#include "driftcal/data_io.hpp"
#include "driftcal/density_ratio.hpp"
#include "driftcal/dscp.hpp"

namespace driftcal {

enum class Method { CP, DSCP, WeightedCP, NonexchCP };

inline constexpr Method kAllMethods[] = {Method::CP, Method::DSCP, Method::WeightedCP,
                                         Method::NonexchCP};

// "cp", "dscp", "wcp", "nexcp".
std::string_view to_string(Method method) noexcept;
Method parse_method(std::string_view text);
// Comma-separated list, deduplicated and returned in canonical order.
std::vector<Method> parse_methods(std::string_view text);

struct EvalConfig {
    double alpha = 0.1;
    ScoreKind score_kind = ScoreKind::LAC;
    LambdaPolicy lambda = FixedLambda{1.0};
    ClassifierConfig classifier;
    ClipBounds clip;
    // Fraction of the test domain used only to train the domain classifier;
    // 0 trains on the full test pool and evaluates on the same prompts.
    double holdout_fraction = 0.0;
    // Forces every density-ratio weight to 1 (no classifier is trained).
    bool uniform_weights = false;
};

struct PairResult {
    std::string cal_domain;
    std::string test_domain;
    Method method = Method::CP;
    double coverage = 0.0;
    double avg_set_size = 0.0;
    std::size_t n_test = 0;
    ExtendedScore threshold;
    std::size_t covered_count = 0;
    std::size_t total_set_size = 0;

    friend bool operator==(const PairResult&, const PairResult&) = default;
};

// Throws IncompatibleDatasets when either side is empty, unlabelled, or the
// embedding dimension or K differ.
std::vector<PairResult> evaluate_pair_methods(const DomainDataset& cal, const DomainDataset& test,
                                              std::span<const Method> methods,
                                              const EvalConfig& config);

PairResult evaluate_pair(const DomainDataset& cal, const DomainDataset& test, Method method,
                         const EvalConfig& config);

struct SweepReport {
    std::vector<PairResult> rows;
    EvalConfig config;
    std::vector<Method> methods;
};

// One row per ordered pair of distinct domains per method, ordered by
// (cal_domain, test_domain, method). parallelism 0 means hardware concurrency.
// Output is independent of parallelism.
SweepReport sweep_all_pairs(std::span<const DomainDataset> datasets, std::span<const Method> methods,
                            const EvalConfig& config, std::size_t parallelism);

struct PairedRow {
    std::string cal_domain;
    std::string test_domain;
    double baseline_coverage = 0.0;
    double treatment_coverage = 0.0;
    bool under_covered = false;  // baseline coverage < 1 - alpha
};

// Throws MissingMethod if either method lacks a row for some pair.
std::vector<PairedRow> paired_comparison(const SweepReport& report, Method baseline,
                                         Method treatment);
std::vector<PairedRow> paired_comparison(std::span<const PairResult> rows, double alpha,
                                         Method baseline, Method treatment);

inline constexpr const char* kCsvHeader =
    "cal_domain,test_domain,method,coverage,avg_set_size,n_test,threshold";

// Rows in report order, 6 fractional digits, "inf" for an infinite threshold.
// With a filter, only rows whose method is listed are written.
void write_csv(const SweepReport& report, std::ostream& out,
               std::optional<std::span<const Method>> filter = std::nullopt);
std::vector<PairResult> parse_csv(std::istream& in);

void write_summary(std::span<const PairResult> rows, double alpha, std::ostream& out);
void write_paired_csv(std::span<const PairedRow> rows, std::ostream& out);

// Writes sweep.csv, summary.txt and (when CP and DSCP are both present)
// paired_cp_dscp.csv into out_dir. Throws IoError naming the failing path.
void emit_report(const SweepReport& report, const std::filesystem::path& out_dir);

}  // namespace driftcal

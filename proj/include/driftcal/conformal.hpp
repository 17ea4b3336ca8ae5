#pragma once

// Weighted empirical score distributions with an atom at +infinity, their
// quantiles, and the prediction sets built from them.

#include <compare>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "driftcal/scores.hpp"

namespace driftcal {

// A score on the extended real line. +infinity is stored as IEEE +inf and
// orders above every finite value.
class ExtendedScore {
public:
    constexpr ExtendedScore() = default;
    constexpr explicit ExtendedScore(double value) : value_(value) {}

    static constexpr ExtendedScore infinity() {
        return ExtendedScore(std::numeric_limits<double>::infinity());
    }

    constexpr bool is_infinite() const { return value_ == std::numeric_limits<double>::infinity(); }
    constexpr double value() const { return value_; }

    friend constexpr auto operator<=>(ExtendedScore, ExtendedScore) = default;

private:
    double value_ = 0.0;
};

// Shortest round-trip decimal, or "inf".
std::string format_score(ExtendedScore s);
// Inverse of format_score. Throws ParseError.
ExtendedScore parse_score(const std::string& text);

struct ScoreAtom {
    double score;
    double mass;
};

// Normalized point masses on finite scores plus a mass at +infinity.
// Atoms are sorted ascending with equal scores merged.
class WeightedScoreDistribution {
public:
    const std::vector<ScoreAtom>& atoms() const noexcept { return atoms_; }
    double infinity_mass() const noexcept { return infinity_mass_; }

    friend WeightedScoreDistribution build_distribution(std::span<const double> scores,
                                                        std::span<const double> weights,
                                                        double infinity_weight);

private:
    WeightedScoreDistribution() = default;

    std::vector<ScoreAtom> atoms_;
    double infinity_mass_ = 0.0;
};

// mass_i = w_i / (sum w + infinity_weight). Throws InvalidWeight on negative
// or non-finite weights, ShapeError on length mismatch and
// DegenerateDistribution when the total weight is zero.
WeightedScoreDistribution build_distribution(std::span<const double> scores,
                                             std::span<const double> weights,
                                             double infinity_weight);

// Cumulative-mass comparisons treat values within this distance of the level
// as reaching it, so that e.g. nine masses of 0.1 reach 0.9.
inline constexpr double kQuantileTolerance = 1e-12;

// Smallest support point whose cumulative mass is >= q. Throws
// InvalidQuantileLevel unless 0 < q < 1.
ExtendedScore quantile(const WeightedScoreDistribution& dist, double q);

struct Threshold {
    ExtendedScore q;
    double level = 0.0;  // the 1 - alpha the quantile was taken at
};

struct PredictionSet {
    std::vector<std::size_t> members;  // ascending label indices
    Threshold threshold_used;

    bool contains(std::size_t label) const;
    std::size_t size() const noexcept { return members.size(); }
};

// Labels whose score is <= the threshold (inclusive).
PredictionSet prediction_set(const ChoiceProbabilities& test_probs, const Threshold& threshold,
                             ScoreKind kind);

Threshold threshold_from(const WeightedScoreDistribution& dist, double alpha);

// Unit weights with a unit mass at infinity. Throws EmptyCalibration for n = 0.
Threshold standard_cp_threshold(std::span<const double> cal_scores, double alpha);

// Density-ratio weights with the test point's own ratio on the infinity atom.
// The result depends on the test point through test_ratio.
Threshold weighted_cp_threshold(std::span<const double> cal_scores,
                                std::span<const double> cal_ratios, double test_ratio,
                                double alpha);

// Fixed weights in [0,1] with a unit mass at infinity.
Threshold nonexch_cp_threshold(std::span<const double> cal_scores,
                               std::span<const double> fixed_weights, double alpha);

}  // namespace driftcal

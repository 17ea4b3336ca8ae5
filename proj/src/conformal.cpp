#include "driftcal/conformal.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include "driftcal/error.hpp"

namespace driftcal {

std::string format_score(ExtendedScore s) {
    if (s.is_infinite()) return "inf";
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), s.value());
    return std::string(buf, end);
}

ExtendedScore parse_score(const std::string& text) {
    if (text == "inf" || text == "+inf") return ExtendedScore::infinity();
    double v = 0.0;
    auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || end != text.data() + text.size() || !std::isfinite(v)) {
        throw Error(ErrorKind::ParseError, "bad score '" + text + "'");
    }
    return ExtendedScore(v);
}

namespace {

void check_alpha(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw Error(ErrorKind::InvalidQuantileLevel, "alpha must lie in (0,1)");
    }
}

}  // namespace

WeightedScoreDistribution build_distribution(std::span<const double> scores,
                                             std::span<const double> weights,
                                             double infinity_weight) {
    if (scores.size() != weights.size()) {
        throw Error(ErrorKind::ShapeError, "scores and weights differ in length");
    }
    if (!(infinity_weight >= 0.0) || !std::isfinite(infinity_weight)) {
        throw Error(ErrorKind::InvalidWeight, "infinity weight must be finite and >= 0");
    }
    double total = infinity_weight;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (!(weights[i] >= 0.0) || !std::isfinite(weights[i])) {
            throw Error(ErrorKind::InvalidWeight, "weight " + std::to_string(i) + " is negative or non-finite");
        }
        if (!std::isfinite(scores[i])) {
            throw Error(ErrorKind::InvalidArgument, "calibration score must be finite");
        }
        total += weights[i];
    }
    if (!(total > 0.0)) {
        throw Error(ErrorKind::DegenerateDistribution, "total weight is zero");
    }

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    WeightedScoreDistribution dist;
    dist.atoms_.reserve(order.size());
    for (std::size_t idx : order) {
        const double mass = weights[idx] / total;
        if (!dist.atoms_.empty() && dist.atoms_.back().score == scores[idx]) {
            dist.atoms_.back().mass += mass;
        } else {
            dist.atoms_.push_back({scores[idx], mass});
        }
    }
    dist.infinity_mass_ = infinity_weight / total;
    return dist;
}

ExtendedScore quantile(const WeightedScoreDistribution& dist, double q) {
    if (!(q > 0.0 && q < 1.0)) {
        throw Error(ErrorKind::InvalidQuantileLevel, "quantile level must lie in (0,1)");
    }
    double cumulative = 0.0;
    for (const ScoreAtom& atom : dist.atoms()) {
        cumulative += atom.mass;
        if (cumulative >= q - kQuantileTolerance) return ExtendedScore(atom.score);
    }
    // With no mass at infinity the last atom carries the remaining rounding error.
    if (dist.infinity_mass() == 0.0 && !dist.atoms().empty()) {
        return ExtendedScore(dist.atoms().back().score);
    }
    return ExtendedScore::infinity();
}

bool PredictionSet::contains(std::size_t label) const {
    return std::binary_search(members.begin(), members.end(), label);
}

PredictionSet prediction_set(const ChoiceProbabilities& test_probs, const Threshold& threshold,
                             ScoreKind kind) {
    PredictionSet set;
    set.threshold_used = threshold;
    for (std::size_t y = 0; y < test_probs.size(); ++y) {
        if (threshold.q.is_infinite() || score(kind, test_probs, y) <= threshold.q.value()) {
            set.members.push_back(y);
        }
    }
    return set;
}

Threshold threshold_from(const WeightedScoreDistribution& dist, double alpha) {
    check_alpha(alpha);
    return Threshold{quantile(dist, 1.0 - alpha), 1.0 - alpha};
}

Threshold standard_cp_threshold(std::span<const double> cal_scores, double alpha) {
    if (cal_scores.empty()) {
        throw Error(ErrorKind::EmptyCalibration, "no calibration scores");
    }
    const std::vector<double> ones(cal_scores.size(), 1.0);
    return threshold_from(build_distribution(cal_scores, ones, 1.0), alpha);
}

Threshold weighted_cp_threshold(std::span<const double> cal_scores,
                                std::span<const double> cal_ratios, double test_ratio,
                                double alpha) {
    if (!(test_ratio >= 0.0)) {
        throw Error(ErrorKind::InvalidWeight, "test ratio must be >= 0");
    }
    return threshold_from(build_distribution(cal_scores, cal_ratios, test_ratio), alpha);
}

Threshold nonexch_cp_threshold(std::span<const double> cal_scores,
                               std::span<const double> fixed_weights, double alpha) {
    for (double w : fixed_weights) {
        if (!(w >= 0.0 && w <= 1.0)) {
            throw Error(ErrorKind::InvalidWeight, "nonexchangeable weights must lie in [0,1]");
        }
    }
    return threshold_from(build_distribution(cal_scores, fixed_weights, 1.0), alpha);
}

}  // namespace driftcal

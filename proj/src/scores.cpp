#include "driftcal/scores.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <string>

#include "driftcal/error.hpp"

namespace driftcal {

std::string_view to_string(ScoreKind kind) noexcept {
    return kind == ScoreKind::LAC ? "lac" : "aps";
}

ScoreKind parse_score_kind(std::string_view text) {
    std::string lower(text);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (lower == "lac") return ScoreKind::LAC;
    if (lower == "aps") return ScoreKind::APS;
    throw Error(ErrorKind::InvalidArgument, "unknown score kind '" + std::string(text) + "'");
}

ChoiceProbabilities::ChoiceProbabilities(std::vector<double> probs) : probs_(std::move(probs)) {
    if (probs_.size() < 2) {
        throw Error(ErrorKind::InvalidLogits, "need at least two choices");
    }
    double total = 0.0;
    for (double p : probs_) {
        if (!(p >= 0.0 && p <= 1.0)) {
            throw Error(ErrorKind::InvalidProbability, "probability outside [0,1]");
        }
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw Error(ErrorKind::InvalidProbability, "probabilities do not sum to 1");
    }
}

std::size_t ChoiceProbabilities::argmax() const noexcept {
    return static_cast<std::size_t>(std::max_element(probs_.begin(), probs_.end()) - probs_.begin());
}

ChoiceProbabilities softmax(std::span<const double> logits) {
    if (logits.size() < 2) {
        throw Error(ErrorKind::InvalidLogits, "need at least two logits");
    }
    for (double v : logits) {
        if (!std::isfinite(v)) throw Error(ErrorKind::InvalidLogits, "non-finite logit");
    }
    const double top = *std::max_element(logits.begin(), logits.end());
    std::vector<double> probs(logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        probs[i] = std::exp(logits[i] - top);
        total += probs[i];
    }
    for (double& p : probs) p /= total;
    return ChoiceProbabilities(std::move(probs));
}

namespace {

void check_label(const ChoiceProbabilities& probs, std::size_t label) {
    if (label >= probs.size()) {
        throw Error(ErrorKind::InvalidLabel, "label " + std::to_string(label) +
                                                 " out of range for K=" +
                                                 std::to_string(probs.size()));
    }
}

}  // namespace

double lac_score(const ChoiceProbabilities& probs, std::size_t label) {
    check_label(probs, label);
    return 1.0 - probs[label];
}

double aps_score(const ChoiceProbabilities& probs, std::size_t label) {
    check_label(probs, label);
    const double own = probs[label];
    double mass = 0.0;
    for (double p : probs.values()) {
        if (p > own) mass += p;
    }
    return mass;
}

double score(ScoreKind kind, const ChoiceProbabilities& probs, std::size_t label) {
    return kind == ScoreKind::LAC ? lac_score(probs, label) : aps_score(probs, label);
}

std::vector<double> label_scores(ScoreKind kind, const ChoiceProbabilities& probs) {
    std::vector<double> out(probs.size());
    for (std::size_t y = 0; y < probs.size(); ++y) out[y] = score(kind, probs, y);
    return out;
}

std::vector<double> score_batch(std::span<const std::vector<double>> logit_rows,
                                std::span<const std::size_t> labels, ScoreKind kind) {
    if (logit_rows.size() != labels.size()) {
        throw Error(ErrorKind::ShapeError, "logit rows and labels differ in length");
    }
    std::vector<double> out;
    out.reserve(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        out.push_back(score(kind, softmax(logit_rows[i]), labels[i]));
    }
    return out;
}

}  // namespace driftcal

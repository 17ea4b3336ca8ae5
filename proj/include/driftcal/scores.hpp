#pragma once

// Logits -> choice probabilities -> nonconformity scores (LAC, APS).

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace driftcal {

enum class ScoreKind { LAC, APS };

std::string_view to_string(ScoreKind kind) noexcept;
// Accepts "lac"/"aps" in any case. Throws Error(InvalidArgument).
ScoreKind parse_score_kind(std::string_view text);

// A probability vector over K >= 2 answer choices. Construction validates
// that every entry lies in [0,1] and the total is 1 within 1e-9.
class ChoiceProbabilities {
public:
    explicit ChoiceProbabilities(std::vector<double> probs);

    std::size_t size() const noexcept { return probs_.size(); }
    double operator[](std::size_t i) const { return probs_[i]; }
    std::span<const double> values() const noexcept { return probs_; }
    std::size_t argmax() const noexcept;

private:
    std::vector<double> probs_;
};

// exp(v - max v) normalized. Throws InvalidLogits on non-finite input or K < 2.
ChoiceProbabilities softmax(std::span<const double> logits);

// 1 - p[label].
double lac_score(const ChoiceProbabilities& probs, std::size_t label);

// Total mass of labels strictly more probable than `label`. Ties add nothing
// and the label's own mass is excluded.
double aps_score(const ChoiceProbabilities& probs, std::size_t label);

double score(ScoreKind kind, const ChoiceProbabilities& probs, std::size_t label);

// Scores of every candidate label, indexed by label.
std::vector<double> label_scores(ScoreKind kind, const ChoiceProbabilities& probs);

// Row-wise softmax + score. Throws ShapeError on length mismatch.
std::vector<double> score_batch(std::span<const std::vector<double>> logit_rows,
                                std::span<const std::size_t> labels, ScoreKind kind);

}  // namespace driftcal

#pragma once

// Domain-shift-aware conformal prediction: density-ratio weights on the
// calibration scores, a calibration-only mass lambda on +infinity, one
// threshold per (calibration set, target domain).

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "driftcal/conformal.hpp"
#include "driftcal/density_ratio.hpp"
#include "driftcal/scores.hpp"

namespace driftcal {

struct FixedLambda {
    double value = 1.0;
};
struct MaxWeightLambda {};
struct WeightQuantileLambda {
    double q = 1.0;
};

using LambdaPolicy = std::variant<FixedLambda, MaxWeightLambda, WeightQuantileLambda>;

// "1.5" -> Fixed, "max" -> MaxWeight, "q0.9" -> WeightQuantile(0.9).
LambdaPolicy parse_lambda_policy(const std::string& text);
std::string to_string(const LambdaPolicy& policy);

std::vector<double> compute_weights(const DensityRatioModel& model,
                                    std::span<const Embedding> cal_embeds);

// Fixed -> value; MaxWeight -> max weight; WeightQuantile(q) -> smallest
// weight whose empirical CDF reaches q.
double resolve_lambda(const LambdaPolicy& policy, std::span<const double> weights);

struct DscpCalibration {
    std::vector<double> weights;
    double lambda = 1.0;
    double alpha = 0.1;
    ScoreKind score_kind = ScoreKind::LAC;
    Threshold threshold;
    std::map<std::string, std::string> provenance;
    std::size_t num_labels = 0;  // K the calibration was built for; 0 if unknown
};

// Threshold = Quantile(1 - alpha) of sum_i w_i d_{S_i} + lambda d_inf, normalized.
// Throws DegenerateDistribution when every weight and lambda are zero.
DscpCalibration calibrate(std::span<const double> cal_scores, std::span<const double> weights,
                          double lambda, double alpha, ScoreKind kind);

PredictionSet predict(const DscpCalibration& cal, std::span<const double> test_logits);

// Artifact I/O. Threshold and weights survive exactly; "inf" marks an infinite threshold.
std::string calibration_to_json(const DscpCalibration& cal);
DscpCalibration calibration_from_json(const std::string& text);
void save_calibration(const DscpCalibration& cal, const std::filesystem::path& path);
DscpCalibration load_calibration(const std::filesystem::path& path);

}  // namespace driftcal

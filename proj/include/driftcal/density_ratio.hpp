#pragma once

// Embedding-space density ratio via a probabilistic domain classifier:
//   r(z) = P(W=1|z) / P(W=0|z) * P(W=0) / P(W=1)
// with W=0 the calibration (old) domain and W=1 the test (new) domain.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace driftcal {

using Embedding = std::vector<double>;

struct ClassifierConfig {
    double l2 = 1e-3;
    int max_iters = 500;
    double tol = 1e-8;  // stop once the gradient norm falls below this
    std::uint64_t seed = 0;  // drives the optional hold-out split; training itself is deterministic
};

struct TrainingMeta {
    int iterations = 0;
    double final_loss = 0.0;
    double l2 = 0.0;
    std::vector<double> loss_history;  // loss before the first step, then after each step
};

// Logistic model p(z) = sigmoid(<coefficients, z> + intercept).
struct ClassifierModel {
    std::vector<double> coefficients;
    double intercept = 0.0;
    TrainingMeta meta;

    std::size_t dim() const noexcept { return coefficients.size(); }
};

inline constexpr double kProbabilityClamp = 1e-6;

struct ClipBounds {
    double lo = 1e-3;
    double hi = 1e3;
};

struct DensityRatioModel {
    ClassifierModel classifier;
    double prior_ratio = 1.0;  // n_cal / n_test
    ClipBounds clip;
};

// L2-regularized logistic regression, calibration rows labelled 0 and test
// rows labelled 1, fit by full-batch gradient descent with step 1/L where
// L = max_i ||(x_i,1)||^2 / 4 + l2 on internally standardized features.
// Coefficients are mapped back to the raw embedding space. The penalty
// applies to the standardized coefficients, not the intercept.
ClassifierModel train_domain_classifier(std::span<const Embedding> cal_embeds,
                                        std::span<const Embedding> test_embeds,
                                        const ClassifierConfig& config);

// sigmoid(<coef, z> + b) clamped to [1e-6, 1 - 1e-6].
double predict_prob(const ClassifierModel& model, std::span<const double> z);

// clip(p / (1 - p) * prior_ratio, lo, hi). Throws InvalidProbability unless 0 < p < 1.
double density_ratio(double p, double prior_ratio, ClipBounds clip);

DensityRatioModel fit_density_ratio(std::span<const Embedding> cal_embeds,
                                    std::span<const Embedding> test_embeds,
                                    const ClassifierConfig& config, ClipBounds clip = {});

double estimate_ratio(const DensityRatioModel& model, std::span<const double> z);

// One non-negative decimal per line. Throws ParseError (including a missing
// file), NegativeWeight and LengthMismatch when expected_n is given and differs.
std::vector<double> import_external_weights(const std::filesystem::path& path,
                                            std::size_t expected_n);
std::vector<double> import_external_weights(const std::filesystem::path& path);

}  // namespace driftcal

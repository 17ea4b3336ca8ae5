#pragma once

// Synthetic data with known ground truth: Gaussian embeddings per domain, a
// shared label model (so Y|Z is identical across domains), closed-form
// density ratios, and the coverage-bound diagnostics.
//
// Label model: with t = <weight_vector, z> and affinities
// a_k = k - (K - 1) / 2, the logits are a_k * t / noise_temp. Labels are
// drawn from the softmax of those logits and the same logits are emitted as
// the "model" output, so the model is calibrated by construction.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "driftcal/data_io.hpp"
#include "driftcal/scores.hpp"

namespace driftcal {

struct LabelModel {
    std::size_t k = 6;
    std::vector<double> weight_vector;
    double noise_temp = 1.0;
};

struct ShiftSpec {
    std::size_t d = 1;
    std::vector<double> cal_mean;
    std::vector<double> test_mean;
    double shared_stddev = 1.0;
    LabelModel label_model;
};

// Throws InvalidSpec on inconsistent dimensions, stddev <= 0, K < 2 or noise_temp <= 0.
void validate(const ShiftSpec& spec);

std::vector<double> generative_logits(const LabelModel& model, std::span<const double> z);

struct SyntheticDataset {
    std::vector<SampleRecord> calibration;  // domain "cal"
    std::vector<SampleRecord> test;         // domain "test"
};

// Both domains drawn from N(cal_mean, s^2 I); requires cal_mean == test_mean.
SyntheticDataset gen_exchangeable(std::size_t n_cal, std::size_t n_test, const ShiftSpec& spec,
                                  std::uint64_t seed);

// Calibration from N(cal_mean, s^2 I), test from N(test_mean, s^2 I).
SyntheticDataset gen_covariate_shift(std::size_t n_cal, std::size_t n_test, const ShiftSpec& spec,
                                     std::uint64_t seed);

// exp((||z - cal_mean||^2 - ||z - test_mean||^2) / (2 s^2)), unclipped.
double oracle_ratio(std::span<const double> z, const ShiftSpec& spec);

double normal_cdf(double x);

// TV(N(m1, s^2), N(m2, s^2)) = 2 Phi(|m1 - m2| / (2 s)) - 1.
double tv_univariate_gaussian(double mean1, double mean2, double sigma);

// TV between the score law under the calibration domain and under the test
// domain, by midpoint quadrature over t = <w, z> and a fine histogram of
// scores on [0, 1].
double score_tv_quadrature(const ShiftSpec& spec, ScoreKind kind, std::size_t grid_points = 40000,
                           std::size_t bins = 20000);

struct TheoryGapReport {
    double lower_gap = 0.0;    // 2 * sum_i mass_i * TV_i
    double upper_slack = 0.0;  // lambda / (sum_j w_j + lambda)
    std::vector<double> per_i_masses;
    bool lambda_dominates_weights = false;  // lambda >= max_i w_i, the bounds' hypothesis
};

// Uses realized weights in place of the essential suprema in the bounds.
// Throws ShapeError on length mismatch, InvalidTV outside [0,1].
TheoryGapReport theory_gap(std::span<const double> weights, double lambda,
                           std::span<const double> tv_per_i);

struct TheoryGapSummary {
    std::size_t replications = 0;
    double mean_lower_gap = 0.0;
    double max_lower_gap = 0.0;
    double mean_upper_slack = 0.0;
    double max_upper_slack = 0.0;
};

TheoryGapSummary summarize(std::span<const TheoryGapReport> reports);

// Several domains sharing one label model; domain i has mean domain_means[i].
struct SuiteSpec {
    std::size_t d = 1;
    double shared_stddev = 1.0;
    LabelModel label_model;
    std::vector<std::vector<double>> domain_means;
    std::vector<std::string> domain_names;  // optional; defaults to "domain-00", ...
    std::size_t n_per_domain = 200;
};

void validate(const SuiteSpec& spec);

// Means spread evenly along weight_vector's direction from `offset` (in
// units of stddev along that direction) over `span_sd` stddevs.
SuiteSpec linear_suite(std::size_t n_domains, std::size_t n_per_domain, double offset,
                       double span_sd, double stddev, const LabelModel& label_model);

std::vector<DomainDataset> gen_domain_suite(const SuiteSpec& spec, std::uint64_t seed);

// JSON spec files. A file with "domain_means" is a suite; otherwise a
// cal/test shift spec (which may also carry "n_cal" and "n_test").
struct ShiftSpecFile {
    ShiftSpec spec;
    std::size_t n_cal = 500;
    std::size_t n_test = 500;
};

bool spec_file_is_suite(const std::filesystem::path& path);
ShiftSpecFile read_shift_spec(const std::filesystem::path& path);
SuiteSpec read_suite_spec(const std::filesystem::path& path);
void write_shift_spec(const ShiftSpecFile& spec, const std::filesystem::path& path);
void write_suite_spec(const SuiteSpec& spec, const std::filesystem::path& path);

}  // namespace driftcal

#include "driftcal/density_ratio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <string>

#include "driftcal/error.hpp"

namespace driftcal {

namespace {

double log1p_exp(double x) {
    // log(1 + e^x) without overflow
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

struct Standardizer {
    std::vector<double> mean;
    std::vector<double> scale;
};

Standardizer fit_standardizer(std::span<const Embedding> a, std::span<const Embedding> b,
                              std::size_t d) {
    Standardizer s{std::vector<double>(d, 0.0), std::vector<double>(d, 1.0)};
    const double n = static_cast<double>(a.size() + b.size());
    for (auto rows : {a, b}) {
        for (const auto& z : rows) {
            for (std::size_t j = 0; j < d; ++j) s.mean[j] += z[j];
        }
    }
    for (double& m : s.mean) m /= n;
    std::vector<double> var(d, 0.0);
    for (auto rows : {a, b}) {
        for (const auto& z : rows) {
            for (std::size_t j = 0; j < d; ++j) {
                const double c = z[j] - s.mean[j];
                var[j] += c * c;
            }
        }
    }
    for (std::size_t j = 0; j < d; ++j) {
        const double sd = std::sqrt(var[j] / n);
        s.scale[j] = sd > 1e-12 ? sd : 1.0;
    }
    return s;
}

}  // namespace

ClassifierModel train_domain_classifier(std::span<const Embedding> cal_embeds,
                                        std::span<const Embedding> test_embeds,
                                        const ClassifierConfig& config) {
    if (cal_embeds.empty() || test_embeds.empty()) {
        throw Error(ErrorKind::DegenerateTraining, "both domains need at least one embedding");
    }
    if (config.max_iters < 0 || !(config.l2 >= 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "max_iters and l2 must be non-negative");
    }
    const std::size_t d = cal_embeds.front().size();
    if (d == 0) throw Error(ErrorKind::ShapeError, "embeddings are empty");
    for (auto rows : {cal_embeds, test_embeds}) {
        for (const auto& z : rows) {
            if (z.size() != d) throw Error(ErrorKind::ShapeError, "embedding dimensions differ");
        }
    }

    const Standardizer st = fit_standardizer(cal_embeds, test_embeds, d);
    const std::size_t n = cal_embeds.size() + test_embeds.size();
    std::vector<double> x(n * d);
    std::vector<double> y(n);
    double max_sq_norm = 0.0;
    {
        std::size_t row = 0;
        for (auto [rows, label] : {std::pair{cal_embeds, 0.0}, std::pair{test_embeds, 1.0}}) {
            for (const auto& z : rows) {
                double sq = 1.0;  // intercept column
                for (std::size_t j = 0; j < d; ++j) {
                    const double v = (z[j] - st.mean[j]) / st.scale[j];
                    x[row * d + j] = v;
                    sq += v * v;
                }
                max_sq_norm = std::max(max_sq_norm, sq);
                y[row] = label;
                ++row;
            }
        }
    }

    const double inv_n = 1.0 / static_cast<double>(n);
    const double step = 1.0 / (0.25 * max_sq_norm + config.l2);

    std::vector<double> w(d, 0.0);
    double b = 0.0;
    std::vector<double> margin(n, 0.0);
    std::vector<double> grad(d);

    auto compute_margins = [&] {
        for (std::size_t i = 0; i < n; ++i) {
            double m = b;
            const double* xi = &x[i * d];
            for (std::size_t j = 0; j < d; ++j) m += w[j] * xi[j];
            margin[i] = m;
        }
    };
    auto loss = [&] {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            // -[y log s(m) + (1-y) log(1-s(m))] = log(1+e^m) - y m
            total += log1p_exp(margin[i]) - y[i] * margin[i];
        }
        double penalty = 0.0;
        for (double wj : w) penalty += wj * wj;
        return total * inv_n + 0.5 * config.l2 * penalty;
    };

    ClassifierModel model;
    model.meta.l2 = config.l2;
    compute_margins();
    double current = loss();
    model.meta.loss_history.push_back(current);

    int iter = 0;
    for (; iter < config.max_iters; ++iter) {
        std::fill(grad.begin(), grad.end(), 0.0);
        double grad_b = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double r = sigmoid(margin[i]) - y[i];
            const double* xi = &x[i * d];
            for (std::size_t j = 0; j < d; ++j) grad[j] += r * xi[j];
            grad_b += r;
        }
        double gnorm = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            grad[j] = grad[j] * inv_n + config.l2 * w[j];
            gnorm += grad[j] * grad[j];
        }
        grad_b *= inv_n;
        gnorm += grad_b * grad_b;
        if (std::sqrt(gnorm) < config.tol) break;

        for (std::size_t j = 0; j < d; ++j) w[j] -= step * grad[j];
        b -= step * grad_b;
        compute_margins();
        current = loss();
        model.meta.loss_history.push_back(current);
    }
    model.meta.iterations = iter;
    model.meta.final_loss = current;

    // Undo the standardization: <w, (z - mu)/s> + b = <w/s, z> + (b - <w/s, mu>)
    model.coefficients.resize(d);
    model.intercept = b;
    for (std::size_t j = 0; j < d; ++j) {
        model.coefficients[j] = w[j] / st.scale[j];
        model.intercept -= model.coefficients[j] * st.mean[j];
    }
    return model;
}

double predict_prob(const ClassifierModel& model, std::span<const double> z) {
    if (z.size() != model.dim()) {
        throw Error(ErrorKind::ShapeError, "embedding dimension " + std::to_string(z.size()) +
                                               " does not match model dimension " +
                                               std::to_string(model.dim()));
    }
    double m = model.intercept;
    for (std::size_t j = 0; j < z.size(); ++j) m += model.coefficients[j] * z[j];
    return std::clamp(sigmoid(m), kProbabilityClamp, 1.0 - kProbabilityClamp);
}

double density_ratio(double p, double prior_ratio, ClipBounds clip) {
    if (!(p > 0.0 && p < 1.0)) {
        throw Error(ErrorKind::InvalidProbability, "probability must lie in (0,1)");
    }
    if (!(prior_ratio > 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "prior ratio must be positive");
    }
    if (!(clip.lo > 0.0 && clip.lo <= clip.hi)) {
        throw Error(ErrorKind::InvalidArgument, "clip bounds must satisfy 0 < lo <= hi");
    }
    return std::clamp(p / (1.0 - p) * prior_ratio, clip.lo, clip.hi);
}

DensityRatioModel fit_density_ratio(std::span<const Embedding> cal_embeds,
                                    std::span<const Embedding> test_embeds,
                                    const ClassifierConfig& config, ClipBounds clip) {
    DensityRatioModel model;
    model.classifier = train_domain_classifier(cal_embeds, test_embeds, config);
    model.prior_ratio =
        static_cast<double>(cal_embeds.size()) / static_cast<double>(test_embeds.size());
    model.clip = clip;
    return model;
}

double estimate_ratio(const DensityRatioModel& model, std::span<const double> z) {
    return density_ratio(predict_prob(model.classifier, z), model.prior_ratio, model.clip);
}

std::vector<double> import_external_weights(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::ParseError, "cannot open weights file " + path.string());
    std::vector<double> weights;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        double v = 0.0;
        auto [end, ec] = std::from_chars(line.data(), line.data() + line.size(), v);
        if (ec != std::errc() || end != line.data() + line.size() || !std::isfinite(v)) {
            throw LineError(ErrorKind::ParseError, line_no,
                            path.string() + ": not a decimal number: '" + line + "'");
        }
        if (v < 0.0) {
            throw LineError(ErrorKind::NegativeWeight, line_no, path.string() + ": negative weight");
        }
        weights.push_back(v);
    }
    return weights;
}

std::vector<double> import_external_weights(const std::filesystem::path& path,
                                            std::size_t expected_n) {
    auto weights = import_external_weights(path);
    if (weights.size() != expected_n) {
        throw Error(ErrorKind::LengthMismatch, path.string() + ": expected " +
                                                   std::to_string(expected_n) + " weights, found " +
                                                   std::to_string(weights.size()));
    }
    return weights;
}

}  // namespace driftcal

#include "driftcal/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>

#include "driftcal/error.hpp"
#include "json.hpp"

namespace driftcal {

using nlohmann::json;

namespace {

void validate_label_model(const LabelModel& m, std::size_t d) {
    if (m.k < 2) throw Error(ErrorKind::InvalidSpec, "label model needs K >= 2");
    if (m.weight_vector.size() != d) {
        throw Error(ErrorKind::InvalidSpec, "weight_vector length differs from d");
    }
    if (!(m.noise_temp > 0.0) || !std::isfinite(m.noise_temp)) {
        throw Error(ErrorKind::InvalidSpec, "noise_temp must be positive");
    }
    for (double w : m.weight_vector) {
        if (!std::isfinite(w)) throw Error(ErrorKind::InvalidSpec, "weight_vector must be finite");
    }
}

void validate_mean(const std::vector<double>& mean, std::size_t d, const char* what) {
    if (mean.size() != d) {
        throw Error(ErrorKind::InvalidSpec, std::string(what) + " length differs from d");
    }
    for (double v : mean) {
        if (!std::isfinite(v)) throw Error(ErrorKind::InvalidSpec, std::string(what) + " must be finite");
    }
}

std::mt19937_64 stream_engine(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    return std::mt19937_64(seq);
}

double affinity(std::size_t k, std::size_t num_labels) {
    return static_cast<double>(k) - 0.5 * static_cast<double>(num_labels - 1);
}

std::vector<double> logits_from_projection(const LabelModel& model, double t) {
    std::vector<double> logits(model.k);
    for (std::size_t k = 0; k < model.k; ++k) logits[k] = affinity(k, model.k) * t / model.noise_temp;
    return logits;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

std::vector<SampleRecord> draw_domain(std::size_t n, std::span<const double> mean, double stddev,
                                      const LabelModel& model, const std::string& domain,
                                      std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<SampleRecord> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        SampleRecord r;
        char id[32];
        std::snprintf(id, sizeof(id), "-%06zu", i);
        r.id = domain + id;
        r.domain = domain;
        r.embedding.resize(mean.size());
        for (std::size_t j = 0; j < mean.size(); ++j) r.embedding[j] = mean[j] + stddev * normal(rng);
        r.logits = generative_logits(model, r.embedding);
        const auto probs = softmax(r.logits);
        const double u = unif(rng);
        std::size_t label = probs.size() - 1;
        double cumulative = 0.0;
        for (std::size_t k = 0; k < probs.size(); ++k) {
            cumulative += probs[k];
            if (u < cumulative) {
                label = k;
                break;
            }
        }
        r.label = label;
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace

void validate(const ShiftSpec& spec) {
    if (spec.d == 0) throw Error(ErrorKind::InvalidSpec, "d must be >= 1");
    validate_mean(spec.cal_mean, spec.d, "cal_mean");
    validate_mean(spec.test_mean, spec.d, "test_mean");
    if (!(spec.shared_stddev > 0.0) || !std::isfinite(spec.shared_stddev)) {
        throw Error(ErrorKind::InvalidSpec, "shared_stddev must be positive");
    }
    validate_label_model(spec.label_model, spec.d);
}

std::vector<double> generative_logits(const LabelModel& model, std::span<const double> z) {
    return logits_from_projection(model, dot(model.weight_vector, z));
}

SyntheticDataset gen_covariate_shift(std::size_t n_cal, std::size_t n_test, const ShiftSpec& spec,
                                     std::uint64_t seed) {
    validate(spec);
    if (n_cal == 0 || n_test == 0) {
        throw Error(ErrorKind::InvalidSpec, "n_cal and n_test must be >= 1");
    }
    SyntheticDataset ds;
    auto cal_rng = stream_engine(seed, 0);
    auto test_rng = stream_engine(seed, 1);
    ds.calibration = draw_domain(n_cal, spec.cal_mean, spec.shared_stddev, spec.label_model, "cal", cal_rng);
    ds.test = draw_domain(n_test, spec.test_mean, spec.shared_stddev, spec.label_model, "test", test_rng);
    return ds;
}

SyntheticDataset gen_exchangeable(std::size_t n_cal, std::size_t n_test, const ShiftSpec& spec,
                                  std::uint64_t seed) {
    validate(spec);
    if (spec.cal_mean != spec.test_mean) {
        throw Error(ErrorKind::InvalidSpec, "exchangeable data requires equal means");
    }
    return gen_covariate_shift(n_cal, n_test, spec, seed);
}

double oracle_ratio(std::span<const double> z, const ShiftSpec& spec) {
    double to_cal = 0.0;
    double to_test = 0.0;
    for (std::size_t j = 0; j < z.size(); ++j) {
        to_cal += (z[j] - spec.cal_mean[j]) * (z[j] - spec.cal_mean[j]);
        to_test += (z[j] - spec.test_mean[j]) * (z[j] - spec.test_mean[j]);
    }
    return std::exp((to_cal - to_test) / (2.0 * spec.shared_stddev * spec.shared_stddev));
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double tv_univariate_gaussian(double mean1, double mean2, double sigma) {
    if (!(sigma > 0.0)) throw Error(ErrorKind::InvalidArgument, "sigma must be positive");
    // 2 Phi(x) - 1 == erf(x / sqrt 2), which keeps precision for small x.
    return std::erf(std::abs(mean1 - mean2) / (2.0 * sigma) / std::numbers::sqrt2);
}

double score_tv_quadrature(const ShiftSpec& spec, ScoreKind kind, std::size_t grid_points,
                           std::size_t bins) {
    validate(spec);
    if (grid_points == 0 || bins == 0) throw Error(ErrorKind::InvalidArgument, "empty quadrature grid");
    const auto& w = spec.label_model.weight_vector;
    const double w_norm = std::sqrt(dot(w, w));
    const double t_cal = dot(w, spec.cal_mean);
    const double t_test = dot(w, spec.test_mean);

    std::vector<double> cal_hist(bins, 0.0);
    std::vector<double> test_hist(bins, 0.0);
    auto bin_of = [&](double s) {
        const auto b = static_cast<std::size_t>(std::clamp(s, 0.0, 1.0) * static_cast<double>(bins));
        return std::min(b, bins - 1);
    };

    if (w_norm == 0.0) {
        // Scores do not depend on z, so both laws coincide.
        return 0.0;
    }
    const double sd = spec.shared_stddev * w_norm;
    const double lo = std::min(t_cal, t_test) - 12.0 * sd;
    const double hi = std::max(t_cal, t_test) + 12.0 * sd;
    const double h = (hi - lo) / static_cast<double>(grid_points);
    const double norm = 1.0 / (sd * std::sqrt(2.0 * std::numbers::pi));
    for (std::size_t g = 0; g < grid_points; ++g) {
        const double t = lo + (static_cast<double>(g) + 0.5) * h;
        const double dc = (t - t_cal) / sd;
        const double dt = (t - t_test) / sd;
        const double pc = norm * std::exp(-0.5 * dc * dc) * h;
        const double pt = norm * std::exp(-0.5 * dt * dt) * h;
        const auto probs = softmax(logits_from_projection(spec.label_model, t));
        for (std::size_t y = 0; y < probs.size(); ++y) {
            const auto b = bin_of(score(kind, probs, y));
            cal_hist[b] += pc * probs[y];
            test_hist[b] += pt * probs[y];
        }
    }
    double tv = 0.0;
    for (std::size_t b = 0; b < bins; ++b) tv += std::abs(cal_hist[b] - test_hist[b]);
    return std::clamp(0.5 * tv, 0.0, 1.0);
}

TheoryGapReport theory_gap(std::span<const double> weights, double lambda,
                           std::span<const double> tv_per_i) {
    if (weights.size() != tv_per_i.size()) {
        throw Error(ErrorKind::ShapeError, "weights and TV terms differ in length");
    }
    if (!(lambda >= 0.0)) throw Error(ErrorKind::InvalidWeight, "lambda must be >= 0");
    double sum_w = 0.0;
    double max_w = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0)) throw Error(ErrorKind::InvalidWeight, "weights must be >= 0");
        sum_w += w;
        max_w = std::max(max_w, w);
    }
    const double total = sum_w + lambda;
    for (double tv : tv_per_i) {
        if (!(tv >= 0.0 && tv <= 1.0)) throw Error(ErrorKind::InvalidTV, "TV terms must lie in [0,1]");
    }
    if (!(total > 0.0)) throw Error(ErrorKind::DegenerateDistribution, "total weight is zero");

    TheoryGapReport report;
    report.per_i_masses.resize(weights.size());
    double gap = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        report.per_i_masses[i] = weights[i] / total;
        gap += report.per_i_masses[i] * tv_per_i[i];
    }
    report.lower_gap = 2.0 * gap;
    report.upper_slack = lambda / total;
    report.lambda_dominates_weights = lambda >= max_w;
    return report;
}

TheoryGapSummary summarize(std::span<const TheoryGapReport> reports) {
    TheoryGapSummary s;
    s.replications = reports.size();
    if (reports.empty()) return s;
    for (const auto& r : reports) {
        s.mean_lower_gap += r.lower_gap;
        s.mean_upper_slack += r.upper_slack;
        s.max_lower_gap = std::max(s.max_lower_gap, r.lower_gap);
        s.max_upper_slack = std::max(s.max_upper_slack, r.upper_slack);
    }
    s.mean_lower_gap /= static_cast<double>(reports.size());
    s.mean_upper_slack /= static_cast<double>(reports.size());
    return s;
}

void validate(const SuiteSpec& spec) {
    if (spec.d == 0) throw Error(ErrorKind::InvalidSpec, "d must be >= 1");
    if (spec.domain_means.size() < 2) throw Error(ErrorKind::InvalidSpec, "a suite needs >= 2 domains");
    if (!spec.domain_names.empty() && spec.domain_names.size() != spec.domain_means.size()) {
        throw Error(ErrorKind::InvalidSpec, "domain_names and domain_means differ in length");
    }
    for (const auto& m : spec.domain_means) validate_mean(m, spec.d, "domain mean");
    if (!(spec.shared_stddev > 0.0) || !std::isfinite(spec.shared_stddev)) {
        throw Error(ErrorKind::InvalidSpec, "shared_stddev must be positive");
    }
    if (spec.n_per_domain == 0) throw Error(ErrorKind::InvalidSpec, "n_per_domain must be >= 1");
    validate_label_model(spec.label_model, spec.d);
}

SuiteSpec linear_suite(std::size_t n_domains, std::size_t n_per_domain, double offset,
                       double span_sd, double stddev, const LabelModel& label_model) {
    SuiteSpec spec;
    spec.d = label_model.weight_vector.size();
    spec.shared_stddev = stddev;
    spec.label_model = label_model;
    spec.n_per_domain = n_per_domain;
    const auto& w = label_model.weight_vector;
    const double w_norm = std::sqrt(dot(w, w));
    if (w_norm == 0.0 || n_domains < 2) {
        throw Error(ErrorKind::InvalidSpec, "linear suite needs a non-zero weight_vector and >= 2 domains");
    }
    for (std::size_t i = 0; i < n_domains; ++i) {
        const double pos = offset + span_sd * static_cast<double>(i) / static_cast<double>(n_domains - 1);
        std::vector<double> mean(spec.d);
        for (std::size_t j = 0; j < spec.d; ++j) mean[j] = pos * stddev * w[j] / w_norm;
        spec.domain_means.push_back(std::move(mean));
    }
    return spec;
}

std::vector<DomainDataset> gen_domain_suite(const SuiteSpec& spec, std::uint64_t seed) {
    validate(spec);
    std::vector<DomainDataset> out;
    for (std::size_t i = 0; i < spec.domain_means.size(); ++i) {
        std::string name;
        if (spec.domain_names.empty()) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "domain-%02zu", i);
            name = buf;
        } else {
            name = spec.domain_names[i];
        }
        auto rng = stream_engine(seed, 100 + i);
        out.push_back({name, draw_domain(spec.n_per_domain, spec.domain_means[i], spec.shared_stddev,
                                         spec.label_model, name, rng)});
    }
    return out;
}

namespace {

json label_model_json(const LabelModel& m) {
    return {{"K", m.k}, {"weight_vector", m.weight_vector}, {"noise_temp", m.noise_temp}};
}

LabelModel label_model_from(const json& j) {
    LabelModel m;
    m.k = j.at("K").get<std::size_t>();
    m.weight_vector = j.at("weight_vector").get<std::vector<double>>();
    m.noise_temp = j.at("noise_temp").get<double>();
    return m;
}

json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::InvalidSpec, path.string() + ": " + e.what());
    }
}

void write_json(const json& j, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
    out << j.dump(2) << '\n';
}

}  // namespace

bool spec_file_is_suite(const std::filesystem::path& path) {
    const json j = read_json(path);
    return j.is_object() && j.contains("domain_means");
}

ShiftSpecFile read_shift_spec(const std::filesystem::path& path) {
    const json j = read_json(path);
    ShiftSpecFile f;
    try {
        f.spec.d = j.at("d").get<std::size_t>();
        f.spec.cal_mean = j.at("cal_mean").get<std::vector<double>>();
        f.spec.test_mean = j.at("test_mean").get<std::vector<double>>();
        f.spec.shared_stddev = j.at("shared_stddev").get<double>();
        f.spec.label_model = label_model_from(j.at("label_model"));
        f.n_cal = j.value("n_cal", f.n_cal);
        f.n_test = j.value("n_test", f.n_test);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::InvalidSpec, path.string() + ": " + e.what());
    }
    validate(f.spec);
    if (f.n_cal == 0 || f.n_test == 0) throw Error(ErrorKind::InvalidSpec, "n_cal and n_test must be >= 1");
    return f;
}

SuiteSpec read_suite_spec(const std::filesystem::path& path) {
    const json j = read_json(path);
    SuiteSpec s;
    try {
        s.d = j.at("d").get<std::size_t>();
        s.shared_stddev = j.at("shared_stddev").get<double>();
        s.label_model = label_model_from(j.at("label_model"));
        s.domain_means = j.at("domain_means").get<std::vector<std::vector<double>>>();
        s.domain_names = j.value("domain_names", std::vector<std::string>{});
        s.n_per_domain = j.value("n_per_domain", s.n_per_domain);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::InvalidSpec, path.string() + ": " + e.what());
    }
    validate(s);
    return s;
}

void write_shift_spec(const ShiftSpecFile& f, const std::filesystem::path& path) {
    write_json({{"d", f.spec.d},
                {"cal_mean", f.spec.cal_mean},
                {"test_mean", f.spec.test_mean},
                {"shared_stddev", f.spec.shared_stddev},
                {"label_model", label_model_json(f.spec.label_model)},
                {"n_cal", f.n_cal},
                {"n_test", f.n_test}},
               path);
}

void write_suite_spec(const SuiteSpec& s, const std::filesystem::path& path) {
    json j{{"d", s.d},
           {"shared_stddev", s.shared_stddev},
           {"label_model", label_model_json(s.label_model)},
           {"domain_means", s.domain_means},
           {"n_per_domain", s.n_per_domain}};
    if (!s.domain_names.empty()) j["domain_names"] = s.domain_names;
    write_json(j, path);
}

}  // namespace driftcal

#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "driftcal/dscp.hpp"
#include "driftcal/error.hpp"
#include "driftcal/synthetic.hpp"
#include "oracles.hpp"

using namespace driftcal;

namespace {

template <typename F>
ErrorKind kind_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an exception");
    return ErrorKind::InvalidArgument;
}

ShiftSpec one_d(double cal_mean, double test_mean, std::size_t k = 6, double temp = 0.5) {
    ShiftSpec s;
    s.d = 1;
    s.cal_mean = {cal_mean};
    s.test_mean = {test_mean};
    s.shared_stddev = 1.0;
    s.label_model = {k, {1.0}, temp};
    return s;
}

// P(Y = k) for t ~ N(mean, sd^2) by midpoint quadrature over t.
std::vector<double> label_marginals(double mean, double sd, std::size_t k, double temp) {
    std::vector<double> p(k, 0.0);
    const int steps = 200000;
    const double lo = mean - 10.0 * sd;
    const double h = 20.0 * sd / steps;
    for (int g = 0; g < steps; ++g) {
        const double t = lo + (g + 0.5) * h;
        const double dens = std::exp(-0.5 * (t - mean) * (t - mean) / (sd * sd)) / (sd * std::sqrt(2.0 * std::numbers::pi));
        std::vector<double> logits(k);
        for (std::size_t j = 0; j < k; ++j) {
            logits[j] = (static_cast<double>(j) - (static_cast<double>(k) - 1.0) / 2.0) * t / temp;
        }
        const auto probs = oracle::softmax_longhand(logits);
        for (std::size_t j = 0; j < k; ++j) p[j] += dens * h * probs[j];
    }
    return p;
}

}  // namespace

TEST_CASE("generators are pure in (spec, seed)") {
    const auto spec = one_d(0.0, 1.0);
    const auto a = gen_covariate_shift(50, 40, spec, 5);
    const auto b = gen_covariate_shift(50, 40, spec, 5);
    const auto c = gen_covariate_shift(50, 40, spec, 6);
    CHECK(a.calibration == b.calibration);
    CHECK(a.test == b.test);
    CHECK_FALSE(a.calibration == c.calibration);
    CHECK(a.calibration.size() == 50);
    CHECK(a.test.size() == 40);
    for (const auto& r : a.calibration) {
        CHECK(r.domain == "cal");
        REQUIRE(r.label.has_value());
        CHECK(*r.label < 6);
        CHECK(r.logits == generative_logits(spec.label_model, r.embedding));
    }
    for (const auto& r : a.test) CHECK(r.domain == "test");
}

TEST_CASE("generator input validation") {
    const auto eq = one_d(0.0, 0.0);
    CHECK(kind_of([&] { gen_exchangeable(0, 10, eq, 1); }) == ErrorKind::InvalidSpec);
    CHECK(kind_of([&] { gen_exchangeable(10, 0, eq, 1); }) == ErrorKind::InvalidSpec);
    CHECK(kind_of([&] { gen_exchangeable(10, 10, one_d(0.0, 1.0), 1); }) == ErrorKind::InvalidSpec);
    auto bad = eq;
    bad.shared_stddev = 0.0;
    CHECK(kind_of([&] { gen_covariate_shift(5, 5, bad, 1); }) == ErrorKind::InvalidSpec);
    bad = eq;
    bad.cal_mean = {0.0, 0.0};
    CHECK(kind_of([&] { gen_covariate_shift(5, 5, bad, 1); }) == ErrorKind::InvalidSpec);
    bad = eq;
    bad.label_model.k = 1;
    CHECK(kind_of([&] { gen_covariate_shift(5, 5, bad, 1); }) == ErrorKind::InvalidSpec);
    bad = eq;
    bad.label_model.noise_temp = 0.0;
    CHECK(kind_of([&] { gen_covariate_shift(5, 5, bad, 1); }) == ErrorKind::InvalidSpec);
}

TEST_CASE("label marginals follow the generative softmax") {
    const std::size_t n = 100000;
    const auto spec = one_d(0.3, 0.3, 5, 0.8);
    const auto ds = gen_exchangeable(n, 1, spec, 17);
    std::vector<double> counts(5, 0.0);
    for (const auto& r : ds.calibration) counts[*r.label] += 1.0;
    const auto p = label_marginals(0.3, 1.0, 5, 0.8);
    for (std::size_t k = 0; k < 5; ++k) {
        const double sigma = std::sqrt(p[k] * (1.0 - p[k]) / n);
        CHECK(std::abs(counts[k] / n - p[k]) <= 3.0 * sigma);
    }
}

TEST_CASE("zero shift reproduces the exchangeable generator") {
    const auto spec = one_d(0.7, 0.7);
    const auto a = gen_covariate_shift(30, 30, spec, 9);
    const auto b = gen_exchangeable(30, 30, spec, 9);
    CHECK(a.calibration == b.calibration);
    CHECK(a.test == b.test);
}

TEST_CASE("a 10 sigma shift gives huge oracle ratios at test points") {
    ShiftSpec spec;
    spec.d = 2;
    spec.cal_mean = {0.0, 0.0};
    spec.test_mean = {10.0, 0.0};
    spec.label_model = {3, {1.0, 0.5}, 1.0};
    const auto ds = gen_covariate_shift(10, 200, spec, 3);
    for (const auto& r : ds.test) CHECK(oracle_ratio(r.embedding, spec) > 1e3);
}

TEST_CASE("conditional label law is shared across domains") {
    const std::size_t n = 100000;
    const auto spec = one_d(0.0, 1.0, 4, 1.0);
    const auto ds = gen_covariate_shift(n, n, spec, 23);
    const int nb = 5;
    const double lo = 0.25, width = 0.1;
    std::vector<std::vector<double>> cc(nb, std::vector<double>(4, 0.0)), tc = cc;
    std::vector<double> cn(nb, 0.0), tn(nb, 0.0);
    auto tally = [&](const std::vector<SampleRecord>& rows, std::vector<std::vector<double>>& c,
                     std::vector<double>& tot) {
        for (const auto& r : rows) {
            const double t = r.embedding[0];
            if (t < lo || t >= lo + nb * width) continue;
            const int b = std::min(nb - 1, static_cast<int>((t - lo) / width));
            c[b][*r.label] += 1.0;
            tot[b] += 1.0;
        }
    };
    tally(ds.calibration, cc, cn);
    tally(ds.test, tc, tn);
    for (int b = 0; b < nb; ++b) {
        REQUIRE(cn[b] > 1000);
        REQUIRE(tn[b] > 1000);
        for (int k = 0; k < 4; ++k) {
            const double pc = cc[b][k] / cn[b];
            const double pt = tc[b][k] / tn[b];
            const double pool = (cc[b][k] + tc[b][k]) / (cn[b] + tn[b]);
            const double sigma = std::sqrt(pool * (1.0 - pool) * (1.0 / cn[b] + 1.0 / tn[b]));
            CHECK(std::abs(pc - pt) <= 3.0 * sigma);
        }
    }
}

TEST_CASE("oracle_ratio examples") {
    CHECK(oracle_ratio(std::vector<double>{1.0}, one_d(0.0, 1.0)) ==
          doctest::Approx(std::exp(0.5)).epsilon(1e-14));
    CHECK(oracle_ratio(std::vector<double>{1.0}, one_d(0.0, 1.0)) == doctest::Approx(1.6487).epsilon(1e-4));
    CHECK(oracle_ratio(std::vector<double>{0.5}, one_d(0.0, 1.0)) == 1.0);
    for (double z : {-3.0, 0.0, 2.5}) CHECK(oracle_ratio(std::vector<double>{z}, one_d(0.4, 0.4)) == 1.0);
}

TEST_CASE("oracle ratio integrates to one under the calibration law") {
    for (double shift : {0.5, 1.0, 2.0}) {
        const auto spec = one_d(0.0, shift);
        std::mt19937_64 rng(1000 + static_cast<std::uint64_t>(shift * 10));
        std::normal_distribution<double> g(0.0, 1.0);
        double sum = 0.0;
        const int n = 1000000;
        std::vector<double> z(1);
        for (int i = 0; i < n; ++i) {
            z[0] = g(rng);
            sum += oracle_ratio(z, spec);
        }
        const double mean = sum / n;
        CHECK(mean >= 0.99);
        CHECK(mean <= 1.01);
    }
}

TEST_CASE("tv_univariate_gaussian") {
    CHECK(tv_univariate_gaussian(0.3, 0.3, 1.0) == 0.0);
    CHECK(tv_univariate_gaussian(0.0, 10.0, 1.0) >= 0.999);
    CHECK(std::abs(tv_univariate_gaussian(0.0, 2.0, 1.0) - 0.682689492137086) <= 1e-10);
    CHECK(std::abs(tv_univariate_gaussian(1.0, 4.0, 1.5) - 0.682689492137086) <= 1e-10);
    // 2 Phi(x) - 1 with the closed form of Phi at x = 0.5
    CHECK(std::abs(tv_univariate_gaussian(0.0, 1.0, 1.0) - 0.38292492254802624) <= 1e-10);
    double prev = -1.0;
    for (double d = 0.0; d <= 8.0; d += 0.25) {
        const double tv = tv_univariate_gaussian(0.0, d, 1.3);
        CHECK(tv == tv_univariate_gaussian(d, 0.0, 1.3));
        CHECK(tv >= prev);
        prev = tv;
    }
    CHECK(kind_of([] { tv_univariate_gaussian(0.0, 1.0, 0.0); }) == ErrorKind::InvalidArgument);
    CHECK(normal_cdf(0.0) == 0.5);
    CHECK(std::abs(normal_cdf(1.0) - 0.8413447460685429) <= 1e-15);
}

TEST_CASE("score-law TV") {
    for (auto kind : {ScoreKind::LAC, ScoreKind::APS}) {
        CHECK(score_tv_quadrature(one_d(0.5, 0.5), kind, 4000, 2000) == doctest::Approx(0.0).epsilon(1e-12));
        for (double shift : {0.5, 1.0, 2.0}) {
            const double tv = score_tv_quadrature(one_d(0.0, shift), kind);
            CHECK(tv > 0.0);
            CHECK(tv <= tv_univariate_gaussian(0.0, shift, 1.0) + 1e-6);
        }
    }
}

TEST_CASE("theory_gap examples") {
    auto r = theory_gap(std::vector<double>{1.0, 1.0}, 2.0, std::vector<double>{0.5, 0.5});
    CHECK(r.lower_gap == 0.5);
    CHECK(r.upper_slack == 0.5);
    CHECK(r.per_i_masses == std::vector<double>{0.25, 0.25});
    CHECK(r.lambda_dominates_weights);

    const std::vector<double> ones(999, 1.0);
    r = theory_gap(ones, 1.0, std::vector<double>(999, 0.0));
    CHECK(r.lower_gap == 0.0);
    CHECK(r.upper_slack == 1.0 / 1000.0);

    CHECK(kind_of([] { theory_gap(std::vector<double>{1.0}, 1.0, std::vector<double>{}); }) ==
          ErrorKind::ShapeError);
    CHECK(kind_of([] { theory_gap(std::vector<double>{1.0}, 1.0, std::vector<double>{1.5}); }) ==
          ErrorKind::InvalidTV);
    CHECK(kind_of([] { theory_gap(std::vector<double>{1.0}, 1.0, std::vector<double>{-0.1}); }) ==
          ErrorKind::InvalidTV);
    CHECK(kind_of([] { theory_gap(std::vector<double>{0.0}, 0.0, std::vector<double>{0.1}); }) ==
          ErrorKind::DegenerateDistribution);

    const TheoryGapReport a{0.2, 0.1, {}, true}, b{0.4, 0.3, {}, false};
    const std::vector<TheoryGapReport> both{a, b};
    const auto s = summarize(both);
    CHECK(s.replications == 2);
    CHECK(s.mean_lower_gap == doctest::Approx(0.3));
    CHECK(s.max_lower_gap == 0.4);
    CHECK(s.mean_upper_slack == doctest::Approx(0.2));
    CHECK(s.max_upper_slack == 0.3);
}

TEST_CASE("coverage with oracle weights stays inside the diagnostic envelope") {
    const auto spec = one_d(1.0, 0.0);
    const double alpha = 0.1;
    const int reps = 2000;
    const std::size_t n = 200;
    const double tv = score_tv_quadrature(spec, ScoreKind::LAC);
    std::vector<TheoryGapReport> reports;
    double coverage = 0.0;
    for (int rep = 0; rep < reps; ++rep) {
        const auto ds = gen_covariate_shift(n, n, spec, 5000 + rep);
        std::vector<double> scores, weights;
        for (const auto& r : ds.calibration) {
            scores.push_back(lac_score(softmax(r.logits), *r.label));
            weights.push_back(oracle_ratio(r.embedding, spec));
        }
        const double lambda = resolve_lambda(MaxWeightLambda{}, weights);
        const auto cal = calibrate(scores, weights, lambda, alpha, ScoreKind::LAC);
        std::size_t hit = 0;
        for (const auto& r : ds.test) hit += predict(cal, r.logits).contains(*r.label) ? 1 : 0;
        coverage += static_cast<double>(hit) / n;
        reports.push_back(theory_gap(weights, lambda, std::vector<double>(n, tv)));
    }
    coverage /= reps;
    const auto s = summarize(reports);
    CHECK(coverage >= 1.0 - alpha - s.mean_lower_gap - 0.02);
    CHECK(coverage <= 1.0 - alpha + s.mean_upper_slack + 0.02);
}

TEST_CASE("suite construction") {
    const LabelModel lm{6, {1.0, 0.0, 0.0}, 0.5};
    const auto suite = linear_suite(4, 25, 0.0, 3.0, 2.0, lm);
    REQUIRE(suite.domain_means.size() == 4);
    CHECK(suite.domain_means[3][0] == doctest::Approx(6.0));
    CHECK(suite.domain_means[1][0] == doctest::Approx(2.0));
    CHECK(suite.domain_means[2][1] == 0.0);
    const auto a = gen_domain_suite(suite, 8);
    const auto b = gen_domain_suite(suite, 8);
    REQUIRE(a.size() == 4);
    CHECK(a[0].domain_id == "domain-00");
    CHECK(a[3].domain_id == "domain-03");
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(a[i].samples == b[i].samples);
        CHECK(a[i].samples.size() == 25);
    }
    auto bad = suite;
    bad.domain_names = {"x"};
    CHECK(kind_of([&] { gen_domain_suite(bad, 1); }) == ErrorKind::InvalidSpec);
}

TEST_CASE("spec files round-trip") {
    oracle::TempDir dir("spec");
    ShiftSpecFile f{one_d(0.25, -1.5, 4, 0.7), 123, 45};
    write_shift_spec(f, dir / "shift.json");
    CHECK_FALSE(spec_file_is_suite(dir / "shift.json"));
    const auto back = read_shift_spec(dir / "shift.json");
    CHECK(back.n_cal == 123);
    CHECK(back.n_test == 45);
    CHECK(back.spec.cal_mean == f.spec.cal_mean);
    CHECK(back.spec.test_mean == f.spec.test_mean);
    CHECK(back.spec.label_model.k == 4);
    CHECK(back.spec.label_model.noise_temp == 0.7);

    auto suite = linear_suite(3, 10, -1.0, 2.0, 1.0, LabelModel{3, {0.6, 0.8}, 1.0});
    suite.domain_names = {"a", "b", "c"};
    write_suite_spec(suite, dir / "suite.json");
    CHECK(spec_file_is_suite(dir / "suite.json"));
    const auto s = read_suite_spec(dir / "suite.json");
    CHECK(s.domain_means == suite.domain_means);
    CHECK(s.domain_names == suite.domain_names);
    CHECK(s.n_per_domain == 10);
}

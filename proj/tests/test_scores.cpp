#include <cmath>
#include <random>

#include "doctest.h"
#include "driftcal/error.hpp"
#include "driftcal/scores.hpp"
#include "oracles.hpp"

using namespace driftcal;

namespace {

ChoiceProbabilities probs(std::vector<double> v) { return ChoiceProbabilities(std::move(v)); }

}  // namespace

TEST_CASE("softmax of equal logits is uniform") {
    const auto p = softmax(std::vector<double>(6, 0.0));
    for (double x : p.values()) CHECK(x == doctest::Approx(1.0 / 6.0).epsilon(1e-15));
}

TEST_CASE("softmax with a log-2 gap gives 1/3 and 2/3 for any offset") {
    for (double c : {-700.0, -3.5, 0.0, 12.25, 650.0}) {
        const auto p = softmax(std::vector<double>{c, c + std::log(2.0)});
        CHECK(p[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
        CHECK(p[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    }
}

TEST_CASE("softmax hand-evaluated three-way example") {
    // e^2 = 7.389, e^1 = 2.718, e^0.1 = 1.105; total 11.212
    const auto p = softmax(std::vector<double>{2.0, 1.0, 0.1});
    CHECK(std::abs(p[0] - 0.659) <= 1e-3);
    CHECK(std::abs(p[1] - 0.242) <= 1e-3);
    CHECK(std::abs(p[2] - 0.099) <= 1e-3);
}

TEST_CASE("softmax rejects non-finite and too-short input") {
    CHECK_THROWS_AS(softmax(std::vector<double>{0.0, NAN}), Error);
    CHECK_THROWS_AS(softmax(std::vector<double>{INFINITY, 0.0}), Error);
    CHECK_THROWS_AS(softmax(std::vector<double>{1.0}), Error);
    try {
        softmax(std::vector<double>{0.0, NAN});
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::InvalidLogits);
    }
}

TEST_CASE("lac examples") {
    CHECK(lac_score(probs({0.7, 0.2, 0.1}), 0) == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(lac_score(probs(std::vector<double>(6, 1.0 / 6.0)), 4) == doctest::Approx(5.0 / 6.0).epsilon(1e-12));
    CHECK(lac_score(probs({0.05, 0.95}), 1) == doctest::Approx(0.05).epsilon(1e-12));
}

TEST_CASE("aps examples follow the strict-inequality formula") {
    CHECK(aps_score(probs({0.7, 0.2, 0.1}), 1) == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(aps_score(probs({0.7, 0.2, 0.1}), 0) == 0.0);
    CHECK(aps_score(probs({0.5, 0.5}), 0) == 0.0);
    CHECK(aps_score(probs({0.5, 0.5}), 1) == 0.0);
}

TEST_CASE("out-of-range labels are rejected") {
    const auto p = probs({0.7, 0.2, 0.1});
    for (auto fn : {&lac_score, &aps_score}) {
        try {
            fn(p, 3);
            FAIL("expected InvalidLabel");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::InvalidLabel);
        }
    }
}

TEST_CASE("score_batch") {
    SUBCASE("empty") {
        CHECK(score_batch({}, {}, ScoreKind::LAC).empty());
    }
    SUBCASE("single row") {
        const std::vector<std::vector<double>> rows{{0.0, 0.0}};
        const std::vector<std::size_t> labels{0};
        const auto out = score_batch(rows, labels, ScoreKind::LAC);
        REQUIRE(out.size() == 1);
        CHECK(out[0] == doctest::Approx(0.5).epsilon(1e-15));
    }
    SUBCASE("length mismatch") {
        const std::vector<std::vector<double>> rows{{0.0, 0.0}};
        try {
            score_batch(rows, {}, ScoreKind::LAC);
            FAIL("expected ShapeError");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::ShapeError);
        }
    }
    SUBCASE("matches a per-row loop") {
        std::mt19937_64 rng(11);
        std::normal_distribution<double> n(0.0, 3.0);
        for (ScoreKind kind : {ScoreKind::LAC, ScoreKind::APS}) {
            for (int trial = 0; trial < 50; ++trial) {
                const std::size_t k = 2 + rng() % 6;
                const std::size_t rows_n = rng() % 20;
                std::vector<std::vector<double>> rows(rows_n, std::vector<double>(k));
                std::vector<std::size_t> labels(rows_n);
                for (std::size_t i = 0; i < rows_n; ++i) {
                    for (double& v : rows[i]) v = n(rng);
                    labels[i] = rng() % k;
                }
                const auto batch = score_batch(rows, labels, kind);
                REQUIRE(batch.size() == rows_n);
                for (std::size_t i = 0; i < rows_n; ++i) {
                    const auto p = oracle::softmax_longhand(rows[i]);
                    double expected = 0.0;
                    if (kind == ScoreKind::LAC) {
                        expected = 1.0 - p[labels[i]];
                    } else {
                        for (double x : p) expected += x > p[labels[i]] ? x : 0.0;
                    }
                    CHECK(batch[i] == doctest::Approx(expected).epsilon(1e-12));
                }
            }
        }
    }
}

TEST_CASE("score properties on random probability vectors") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0.0, 2.0);
    for (int trial = 0; trial < 2000; ++trial) {
        const std::size_t k = 2 + rng() % 7;
        std::vector<double> logits(k);
        for (double& v : logits) v = n(rng);
        // Occasionally force ties.
        if (trial % 7 == 0) logits[1] = logits[0];
        const auto p = softmax(logits);

        double total = 0.0;
        for (double x : p.values()) total += x;
        CHECK(std::abs(total - 1.0) <= 1e-9);
        CHECK(aps_score(p, p.argmax()) == 0.0);

        for (std::size_t y = 0; y < k; ++y) {
            const double lac = lac_score(p, y);
            const double aps = aps_score(p, y);
            CHECK(lac >= 0.0);
            CHECK(lac <= 1.0);
            CHECK(aps >= 0.0);
            CHECK(aps <= 1.0 - p[y] + 1e-12);
            CHECK(aps < 1.0);
        }

        // Shift invariance.
        std::vector<double> shifted = logits;
        const double c = n(rng) * 50.0;
        for (double& v : shifted) v += c;
        const auto q = softmax(shifted);
        for (std::size_t y = 0; y < k; ++y) CHECK(std::abs(p[y] - q[y]) <= 1e-12);
        CHECK(q.argmax() == p.argmax());
    }
}

TEST_CASE("lac decreases strictly as the label's probability grows") {
    // Raise p[0] and renormalize the rest proportionally.
    const std::vector<double> base{0.2, 0.5, 0.3};
    double previous = 2.0;
    for (double p0 = 0.05; p0 < 0.99; p0 += 0.05) {
        std::vector<double> v(3);
        v[0] = p0;
        v[1] = base[1] / (base[1] + base[2]) * (1.0 - p0);
        v[2] = base[2] / (base[1] + base[2]) * (1.0 - p0);
        const double s = lac_score(probs(v), 0);
        CHECK(s < previous);
        previous = s;
    }
}

TEST_CASE("score kind parsing") {
    CHECK(parse_score_kind("LAC") == ScoreKind::LAC);
    CHECK(parse_score_kind("aps") == ScoreKind::APS);
    CHECK_THROWS_AS(parse_score_kind("raps"), Error);
}

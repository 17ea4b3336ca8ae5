#include "driftcal/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "driftcal/error.hpp"

namespace driftcal {

std::string_view to_string(Method method) noexcept {
    switch (method) {
        case Method::CP: return "cp";
        case Method::DSCP: return "dscp";
        case Method::WeightedCP: return "wcp";
        case Method::NonexchCP: return "nexcp";
    }
    return "?";
}

Method parse_method(std::string_view text) {
    for (Method m : kAllMethods) {
        if (to_string(m) == text) return m;
    }
    throw Error(ErrorKind::InvalidArgument, "unknown method '" + std::string(text) + "'");
}

std::vector<Method> parse_methods(std::string_view text) {
    std::vector<Method> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto comma = text.find(',', start);
        const auto token = text.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                                : comma - start);
        if (!token.empty()) out.push_back(parse_method(token));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

namespace {

std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 1469598103934665603ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

void check_compatible(const DomainDataset& cal, const DomainDataset& test) {
    if (cal.samples.empty() || test.samples.empty()) {
        throw Error(ErrorKind::IncompatibleDatasets, "domain '" +
                                                         (cal.samples.empty() ? cal.domain_id : test.domain_id) +
                                                         "' has no samples");
    }
    const std::size_t d = cal.samples.front().embedding.size();
    const std::size_t k = cal.samples.front().logits.size();
    for (const auto* ds : {&cal, &test}) {
        for (const auto& s : ds->samples) {
            if (s.embedding.size() != d || s.logits.size() != k) {
                throw Error(ErrorKind::IncompatibleDatasets,
                            "sample '" + s.id + "' in domain '" + ds->domain_id +
                                "' has a different embedding dimension or K");
            }
            if (!s.label) {
                throw Error(ErrorKind::IncompatibleDatasets,
                            "sample '" + s.id + "' in domain '" + ds->domain_id + "' has no label");
            }
        }
    }
}

struct Tally {
    std::size_t covered = 0;
    std::size_t set_total = 0;
};

void tally(Tally& t, const PredictionSet& set, std::size_t label) {
    t.covered += set.contains(label) ? 1 : 0;
    t.set_total += set.size();
}

PairResult make_result(const DomainDataset& cal, const DomainDataset& test, Method method,
                       const Tally& t, std::size_t n_test, ExtendedScore threshold) {
    PairResult r;
    r.cal_domain = cal.domain_id;
    r.test_domain = test.domain_id;
    r.method = method;
    r.n_test = n_test;
    r.covered_count = t.covered;
    r.total_set_size = t.set_total;
    r.coverage = static_cast<double>(t.covered) / static_cast<double>(n_test);
    r.avg_set_size = static_cast<double>(t.set_total) / static_cast<double>(n_test);
    r.threshold = threshold;
    return r;
}

}  // namespace

std::vector<PairResult> evaluate_pair_methods(const DomainDataset& cal, const DomainDataset& test,
                                              std::span<const Method> methods,
                                              const EvalConfig& config) {
    check_compatible(cal, test);
    if (!(config.holdout_fraction >= 0.0 && config.holdout_fraction < 1.0)) {
        throw Error(ErrorKind::InvalidArgument, "holdout_fraction must lie in [0,1)");
    }

    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> eval_idx(test.samples.size());
    std::iota(eval_idx.begin(), eval_idx.end(), std::size_t{0});
    if (config.holdout_fraction > 0.0) {
        std::mt19937_64 rng(fnv1a(test.domain_id, fnv1a(cal.domain_id, config.classifier.seed)));
        std::shuffle(eval_idx.begin(), eval_idx.end(), rng);
        const auto n_train = static_cast<std::size_t>(
            std::ceil(config.holdout_fraction * static_cast<double>(eval_idx.size())));
        if (n_train == 0 || n_train >= eval_idx.size()) {
            throw Error(ErrorKind::IncompatibleDatasets, "hold-out split leaves an empty side");
        }
        train_idx.assign(eval_idx.begin(), eval_idx.begin() + static_cast<std::ptrdiff_t>(n_train));
        eval_idx.erase(eval_idx.begin(), eval_idx.begin() + static_cast<std::ptrdiff_t>(n_train));
        std::sort(train_idx.begin(), train_idx.end());
        std::sort(eval_idx.begin(), eval_idx.end());
    } else {
        train_idx = eval_idx;
    }

    const std::size_t n = cal.samples.size();
    std::vector<double> cal_scores(n);
    std::vector<Embedding> cal_embeds(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& s = cal.samples[i];
        cal_scores[i] = score(config.score_kind, softmax(s.logits), *s.label);
        cal_embeds[i] = s.embedding;
    }

    const bool needs_ratios = std::any_of(methods.begin(), methods.end(),
                                          [](Method m) { return m != Method::CP; });
    std::optional<DensityRatioModel> ratio_model;
    std::vector<double> weights(n, 1.0);
    if (needs_ratios && !config.uniform_weights) {
        std::vector<Embedding> train_embeds;
        train_embeds.reserve(train_idx.size());
        for (std::size_t i : train_idx) train_embeds.push_back(test.samples[i].embedding);
        ratio_model = fit_density_ratio(cal_embeds, train_embeds, config.classifier, config.clip);
        weights = compute_weights(*ratio_model, cal_embeds);
    }

    std::vector<ChoiceProbabilities> test_probs;
    test_probs.reserve(eval_idx.size());
    for (std::size_t i : eval_idx) test_probs.push_back(softmax(test.samples[i].logits));
    auto label_of = [&](std::size_t e) { return *test.samples[eval_idx[e]].label; };

    std::vector<PairResult> out;
    for (Method method : methods) {
        Tally t;
        ExtendedScore reported;
        switch (method) {
            case Method::CP: {
                const auto thr = standard_cp_threshold(cal_scores, config.alpha);
                for (std::size_t e = 0; e < eval_idx.size(); ++e) {
                    tally(t, prediction_set(test_probs[e], thr, config.score_kind), label_of(e));
                }
                reported = thr.q;
                break;
            }
            case Method::DSCP: {
                const double lambda = resolve_lambda(config.lambda, weights);
                const auto calib = calibrate(cal_scores, weights, lambda, config.alpha, config.score_kind);
                for (std::size_t e = 0; e < eval_idx.size(); ++e) {
                    tally(t, prediction_set(test_probs[e], calib.threshold, config.score_kind), label_of(e));
                }
                reported = calib.threshold.q;
                break;
            }
            case Method::WeightedCP: {
                // The threshold moves with each test point; report the lower median.
                std::vector<ExtendedScore> thresholds;
                thresholds.reserve(eval_idx.size());
                for (std::size_t e = 0; e < eval_idx.size(); ++e) {
                    const auto& z = test.samples[eval_idx[e]].embedding;
                    const double test_ratio = ratio_model ? estimate_ratio(*ratio_model, z) : 1.0;
                    const auto thr = weighted_cp_threshold(cal_scores, weights, test_ratio, config.alpha);
                    tally(t, prediction_set(test_probs[e], thr, config.score_kind), label_of(e));
                    thresholds.push_back(thr.q);
                }
                const auto mid = thresholds.begin() + static_cast<std::ptrdiff_t>((thresholds.size() - 1) / 2);
                std::nth_element(thresholds.begin(), mid, thresholds.end());
                reported = *mid;
                break;
            }
            case Method::NonexchCP: {
                // Weights rescaled into [0,1] by the largest one.
                const double top = *std::max_element(weights.begin(), weights.end());
                std::vector<double> fixed(weights.size());
                for (std::size_t i = 0; i < weights.size(); ++i) fixed[i] = top > 0.0 ? weights[i] / top : 0.0;
                const auto thr = nonexch_cp_threshold(cal_scores, fixed, config.alpha);
                for (std::size_t e = 0; e < eval_idx.size(); ++e) {
                    tally(t, prediction_set(test_probs[e], thr, config.score_kind), label_of(e));
                }
                reported = thr.q;
                break;
            }
        }
        out.push_back(make_result(cal, test, method, t, eval_idx.size(), reported));
    }
    return out;
}

PairResult evaluate_pair(const DomainDataset& cal, const DomainDataset& test, Method method,
                         const EvalConfig& config) {
    const Method one[] = {method};
    return evaluate_pair_methods(cal, test, one, config).front();
}

SweepReport sweep_all_pairs(std::span<const DomainDataset> datasets, std::span<const Method> methods,
                            const EvalConfig& config, std::size_t parallelism) {
    if (datasets.size() < 2) {
        throw Error(ErrorKind::IncompatibleDatasets, "a sweep needs at least two domains");
    }
    std::vector<const DomainDataset*> sorted;
    for (const auto& ds : datasets) sorted.push_back(&ds);
    std::sort(sorted.begin(), sorted.end(),
              [](const DomainDataset* a, const DomainDataset* b) { return a->domain_id < b->domain_id; });
    for (std::size_t i = 1; i < sorted.size(); ++i) {
        if (sorted[i]->domain_id == sorted[i - 1]->domain_id) {
            throw Error(ErrorKind::IncompatibleDatasets, "duplicate domain '" + sorted[i]->domain_id + "'");
        }
    }

    SweepReport report;
    report.config = config;
    report.methods.assign(methods.begin(), methods.end());
    std::sort(report.methods.begin(), report.methods.end());
    report.methods.erase(std::unique(report.methods.begin(), report.methods.end()), report.methods.end());

    std::vector<std::pair<std::size_t, std::size_t>> tasks;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        for (std::size_t j = 0; j < sorted.size(); ++j) {
            if (i != j) tasks.emplace_back(i, j);
        }
    }
    std::vector<std::vector<PairResult>> results(tasks.size());
    std::vector<std::exception_ptr> errors(tasks.size());

    std::size_t workers = parallelism == 0 ? std::thread::hardware_concurrency() : parallelism;
    workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(tasks.size(), 1));

    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t t = next++; t < tasks.size(); t = next++) {
            try {
                results[t] = evaluate_pair_methods(*sorted[tasks[t].first], *sorted[tasks[t].second],
                                                   report.methods, config);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        }
    };
    if (workers == 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    }

    for (std::size_t t = 0; t < tasks.size(); ++t) {
        if (errors[t]) std::rethrow_exception(errors[t]);
        for (auto& r : results[t]) report.rows.push_back(std::move(r));
    }
    return report;
}

std::vector<PairedRow> paired_comparison(std::span<const PairResult> rows, double alpha,
                                         Method baseline, Method treatment) {
    std::map<std::pair<std::string, std::string>, std::pair<const PairResult*, const PairResult*>> pairs;
    std::vector<std::pair<std::string, std::string>> order;
    for (const auto& r : rows) {
        const auto key = std::pair{r.cal_domain, r.test_domain};
        auto [it, inserted] = pairs.try_emplace(key, nullptr, nullptr);
        if (inserted) order.push_back(key);
        if (r.method == baseline) it->second.first = &r;
        if (r.method == treatment) it->second.second = &r;
    }
    std::vector<PairedRow> out;
    for (const auto& key : order) {
        const auto [b, t] = pairs.at(key);
        if (!b || !t) {
            throw Error(ErrorKind::MissingMethod,
                        "pair (" + key.first + ", " + key.second + ") lacks method '" +
                            std::string(to_string(b ? treatment : baseline)) + "'");
        }
        out.push_back({key.first, key.second, b->coverage, t->coverage, b->coverage < 1.0 - alpha});
    }
    return out;
}

std::vector<PairedRow> paired_comparison(const SweepReport& report, Method baseline, Method treatment) {
    return paired_comparison(report.rows, report.config.alpha, baseline, treatment);
}

namespace {

std::string fixed6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

std::string threshold_field(ExtendedScore s) { return s.is_infinite() ? "inf" : fixed6(s.value()); }

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(line);
    while (std::getline(is, cur, ',')) out.push_back(cur);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_fixed(const std::string& s, std::size_t line) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw LineError(ErrorKind::ParseError, line, "bad number '" + s + "'");
    }
}

double median_of(std::vector<double> v) {
    if (v.empty()) return std::nan("");
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace

void write_csv(const SweepReport& report, std::ostream& out,
               std::optional<std::span<const Method>> filter) {
    out << kCsvHeader << '\n';
    for (const auto& r : report.rows) {
        if (filter && std::find(filter->begin(), filter->end(), r.method) == filter->end()) continue;
        out << r.cal_domain << ',' << r.test_domain << ',' << to_string(r.method) << ','
            << fixed6(r.coverage) << ',' << fixed6(r.avg_set_size) << ',' << r.n_test << ','
            << threshold_field(r.threshold) << '\n';
    }
}

std::vector<PairResult> parse_csv(std::istream& in) {
    std::string line;
    std::size_t line_no = 1;
    if (!std::getline(in, line)) throw Error(ErrorKind::ParseError, "empty CSV");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kCsvHeader) throw LineError(ErrorKind::ParseError, 1, "unexpected CSV header");
    std::vector<PairResult> rows;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto f = split_csv(line);
        if (f.size() != 7) throw LineError(ErrorKind::ParseError, line_no, "expected 7 fields");
        PairResult r;
        r.cal_domain = f[0];
        r.test_domain = f[1];
        try {
            r.method = parse_method(f[2]);
        } catch (const Error& e) {
            throw LineError(ErrorKind::ParseError, line_no, e.what());
        }
        r.coverage = parse_fixed(f[3], line_no);
        r.avg_set_size = parse_fixed(f[4], line_no);
        r.n_test = static_cast<std::size_t>(parse_fixed(f[5], line_no));
        r.threshold = f[6] == "inf" ? ExtendedScore::infinity() : ExtendedScore(parse_fixed(f[6], line_no));
        r.covered_count = static_cast<std::size_t>(std::llround(r.coverage * static_cast<double>(r.n_test)));
        r.total_set_size = static_cast<std::size_t>(std::llround(r.avg_set_size * static_cast<double>(r.n_test)));
        rows.push_back(std::move(r));
    }
    return rows;
}

void write_summary(std::span<const PairResult> rows, double alpha, std::ostream& out) {
    out << "alpha " << fixed6(alpha) << " target_coverage " << fixed6(1.0 - alpha) << '\n';
    out << "method pairs median_coverage mean_coverage frac_under_target median_set_size mean_set_size\n";
    for (Method m : kAllMethods) {
        std::vector<double> cov;
        std::vector<double> size;
        std::size_t under = 0;
        for (const auto& r : rows) {
            if (r.method != m) continue;
            cov.push_back(r.coverage);
            size.push_back(r.avg_set_size);
            under += r.coverage < 1.0 - alpha ? 1 : 0;
        }
        if (cov.empty()) continue;
        const double n = static_cast<double>(cov.size());
        out << to_string(m) << ' ' << cov.size() << ' ' << fixed6(median_of(cov)) << ' '
            << fixed6(std::accumulate(cov.begin(), cov.end(), 0.0) / n) << ' '
            << fixed6(static_cast<double>(under) / n) << ' ' << fixed6(median_of(size)) << ' '
            << fixed6(std::accumulate(size.begin(), size.end(), 0.0) / n) << '\n';
    }
}

void write_paired_csv(std::span<const PairedRow> rows, std::ostream& out) {
    out << "cal_domain,test_domain,baseline_coverage,treatment_coverage,under_covered\n";
    for (const auto& r : rows) {
        out << r.cal_domain << ',' << r.test_domain << ',' << fixed6(r.baseline_coverage) << ','
            << fixed6(r.treatment_coverage) << ',' << (r.under_covered ? 1 : 0) << '\n';
    }
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
    out << content;
    out.flush();
    if (!out) throw Error(ErrorKind::IoError, "write failure on " + path.string());
}

}  // namespace

void emit_report(const SweepReport& report, const std::filesystem::path& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw Error(ErrorKind::IoError, "cannot create " + out_dir.string() + ": " + ec.message());

    std::ostringstream csv;
    write_csv(report, csv);
    write_file(out_dir / "sweep.csv", csv.str());

    std::ostringstream summary;
    write_summary(report.rows, report.config.alpha, summary);
    write_file(out_dir / "summary.txt", summary.str());

    const auto has = [&](Method m) {
        return std::find(report.methods.begin(), report.methods.end(), m) != report.methods.end();
    };
    if (has(Method::CP) && has(Method::DSCP)) {
        std::ostringstream paired;
        write_paired_csv(paired_comparison(report, Method::CP, Method::DSCP), paired);
        write_file(out_dir / "paired_cp_dscp.csv", paired.str());
    }
}

}  // namespace driftcal

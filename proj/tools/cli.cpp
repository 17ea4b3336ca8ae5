#include "cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "driftcal/data_io.hpp"
#include "driftcal/dscp.hpp"
#include "driftcal/error.hpp"
#include "driftcal/eval.hpp"
#include "driftcal/synthetic.hpp"
#include "json.hpp"

namespace driftcal::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Shared run settings. Precedence: command-line flag > --config file > DRIFTCAL_SEED (seed only) > default.
struct RunConfig {
    double alpha = 0.1;
    std::string score = "lac";
    std::string lambda = "1";
    double l2 = ClassifierConfig{}.l2;
    int max_iters = ClassifierConfig{}.max_iters;
    double tol = ClassifierConfig{}.tol;
    double clip_lo = ClipBounds{}.lo;
    double clip_hi = ClipBounds{}.hi;
    std::uint64_t seed = 0;
    std::size_t parallelism = 0;
    double holdout = 0.0;
    std::string config_path;
};

struct RunOptions {
    CLI::Option* alpha = nullptr;
    CLI::Option* score = nullptr;
    CLI::Option* lambda = nullptr;
    CLI::Option* l2 = nullptr;
    CLI::Option* max_iters = nullptr;
    CLI::Option* tol = nullptr;
    CLI::Option* clip_lo = nullptr;
    CLI::Option* clip_hi = nullptr;
    CLI::Option* seed = nullptr;
    CLI::Option* parallelism = nullptr;
    CLI::Option* holdout = nullptr;
};

RunOptions add_run_options(CLI::App& cmd, RunConfig& cfg) {
    RunOptions o;
    o.alpha = cmd.add_option("--alpha", cfg.alpha, "Miscoverage level in (0,1)")->capture_default_str();
    o.score = cmd.add_option("--score", cfg.score, "Nonconformity score: lac or aps")->capture_default_str();
    o.lambda = cmd.add_option("--lambda", cfg.lambda,
                              "Infinity-atom weight: a number, 'max', or 'q<level>' for a weight quantile")
                   ->capture_default_str();
    o.l2 = cmd.add_option("--l2", cfg.l2, "Domain classifier L2 strength")->capture_default_str();
    o.max_iters = cmd.add_option("--max-iters", cfg.max_iters, "Domain classifier iterations")->capture_default_str();
    o.tol = cmd.add_option("--tol", cfg.tol, "Gradient-norm stopping tolerance")->capture_default_str();
    o.clip_lo = cmd.add_option("--clip-lo", cfg.clip_lo, "Lower clip for density ratios")->capture_default_str();
    o.clip_hi = cmd.add_option("--clip-hi", cfg.clip_hi, "Upper clip for density ratios")->capture_default_str();
    o.seed = cmd.add_option("--seed", cfg.seed, "Seed (falls back to DRIFTCAL_SEED)");
    cmd.add_option("--config", cfg.config_path, "JSON file with default values for these flags")
        ->check(CLI::ExistingFile);
    return o;
}

template <typename T>
void merge(const json& j, const char* key, CLI::Option* opt, T& value) {
    if (opt && opt->count() == 0 && j.contains(key)) value = j.at(key).get<T>();
}

void resolve(RunConfig& cfg, const RunOptions& o) {
    if (!cfg.config_path.empty()) {
        std::ifstream in(cfg.config_path);
        json j;
        try {
            j = json::parse(in);
            merge(j, "alpha", o.alpha, cfg.alpha);
            merge(j, "score", o.score, cfg.score);
            if (o.lambda && o.lambda->count() == 0 && j.contains("lambda")) {
                cfg.lambda = j["lambda"].is_string() ? j["lambda"].get<std::string>() : j["lambda"].dump();
            }
            merge(j, "l2", o.l2, cfg.l2);
            merge(j, "max_iters", o.max_iters, cfg.max_iters);
            merge(j, "tol", o.tol, cfg.tol);
            merge(j, "clip_lo", o.clip_lo, cfg.clip_lo);
            merge(j, "clip_hi", o.clip_hi, cfg.clip_hi);
            merge(j, "seed", o.seed, cfg.seed);
            merge(j, "parallelism", o.parallelism, cfg.parallelism);
            merge(j, "holdout", o.holdout, cfg.holdout);
        } catch (const json::exception& e) {
            throw Error(ErrorKind::ParseError, cfg.config_path + ": " + e.what());
        }
        if (o.seed->count() == 0 && j.contains("seed")) return;
    }
    if (o.seed->count() == 0) {
        if (const char* env = std::getenv("DRIFTCAL_SEED")) {
            try {
                cfg.seed = std::stoull(env);
            } catch (const std::exception&) {
                throw Error(ErrorKind::InvalidArgument, std::string("DRIFTCAL_SEED is not an integer: ") + env);
            }
        }
    }
}

EvalConfig to_eval_config(const RunConfig& cfg) {
    if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw Error(ErrorKind::InvalidArgument, "alpha must lie in (0,1)");
    EvalConfig e;
    e.alpha = cfg.alpha;
    e.score_kind = parse_score_kind(cfg.score);
    e.lambda = parse_lambda_policy(cfg.lambda);
    e.classifier.l2 = cfg.l2;
    e.classifier.max_iters = cfg.max_iters;
    e.classifier.tol = cfg.tol;
    e.classifier.seed = cfg.seed;
    e.clip = {cfg.clip_lo, cfg.clip_hi};
    if (!(e.clip.lo > 0.0 && e.clip.lo <= e.clip.hi)) {
        throw Error(ErrorKind::InvalidArgument, "clip bounds must satisfy 0 < lo <= hi");
    }
    e.holdout_fraction = cfg.holdout;
    return e;
}

std::string num(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
    out << text;
    if (!out) throw Error(ErrorKind::IoError, "write failure on " + path.string());
}

// ---- synth ----------------------------------------------------------------

void cmd_synth(const std::string& spec_path, const fs::path& out_dir, std::uint64_t seed, std::ostream& out) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw Error(ErrorKind::IoError, "cannot create " + out_dir.string() + ": " + ec.message());

    DatasetManifest manifest;
    std::vector<std::pair<std::string, std::vector<SampleRecord>>> files;
    if (spec_file_is_suite(spec_path)) {
        const auto suite = read_suite_spec(spec_path);
        for (auto& ds : gen_domain_suite(suite, seed)) files.emplace_back(ds.domain_id, std::move(ds.samples));
        manifest.d = suite.d;
        manifest.k = suite.label_model.k;
    } else {
        const auto spec = read_shift_spec(spec_path);
        auto ds = gen_covariate_shift(spec.n_cal, spec.n_test, spec.spec, seed);
        files.emplace_back("cal", std::move(ds.calibration));
        files.emplace_back("test", std::move(ds.test));
        manifest.d = spec.spec.d;
        manifest.k = spec.spec.label_model.k;
    }
    for (const auto& [domain, records] : files) {
        const std::string name = domain + ".jsonl";
        write_samples(records, out_dir / name);
        manifest.files.push_back({name, domain, sha256_file(out_dir / name)});
        out << "wrote " << (out_dir / name).string() << " (" << records.size() << " records)\n";
    }
    write_manifest(manifest, out_dir / "manifest.json");
    out << "wrote " << (out_dir / "manifest.json").string() << '\n';
}

// ---- calibrate ------------------------------------------------------------

struct CalibrateArgs {
    std::string cal_path;
    std::string test_path;
    std::string out_path;
    std::string weights_file;
    bool uniform = false;
    bool mmlu = false;
};

void cmd_calibrate(const CalibrateArgs& args, const EvalConfig& cfg, std::ostream& out) {
    auto cal = load_samples(args.cal_path);
    if (args.mmlu) cal = apply_mmlu_profile(std::move(cal));
    if (cal.empty()) throw Error(ErrorKind::EmptyCalibration, args.cal_path + " has no records");

    const std::size_t n = cal.size();
    std::vector<double> scores(n);
    std::vector<Embedding> cal_embeds(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!cal[i].label) {
            throw Error(ErrorKind::ParseError, args.cal_path + ": record '" + cal[i].id + "' has no label");
        }
        scores[i] = score(cfg.score_kind, softmax(cal[i].logits), *cal[i].label);
        cal_embeds[i] = cal[i].embedding;
    }

    std::map<std::string, std::string> provenance{{"calibration_file", args.cal_path},
                                                  {"calibration_domain", cal.front().domain},
                                                  {"lambda_policy", to_string(cfg.lambda)}};
    std::vector<double> weights;
    if (args.uniform) {
        weights.assign(n, 1.0);
        provenance["weights"] = "uniform";
    } else if (!args.weights_file.empty()) {
        weights = import_external_weights(args.weights_file, n);
        provenance["weights"] = "external:" + args.weights_file;
    } else {
        if (args.test_path.empty()) {
            throw Error(ErrorKind::InvalidArgument, "--test is required unless --uniform-weights or --weights-file is given");
        }
        auto test = load_samples(args.test_path, cal_embeds.front().size(), cal.front().logits.size());
        if (args.mmlu) test = apply_mmlu_profile(std::move(test));
        if (test.empty()) throw Error(ErrorKind::DegenerateTraining, args.test_path + " has no records");
        std::vector<Embedding> test_embeds;
        test_embeds.reserve(test.size());
        for (const auto& r : test) test_embeds.push_back(r.embedding);
        const auto model = fit_density_ratio(cal_embeds, test_embeds, cfg.classifier, cfg.clip);
        weights = compute_weights(model, cal_embeds);
        provenance["weights"] = "classifier";
        provenance["test_file"] = args.test_path;
        provenance["test_domain"] = test.front().domain;
        provenance["classifier_iterations"] = std::to_string(model.classifier.meta.iterations);
    }

    const double lambda = resolve_lambda(cfg.lambda, weights);
    auto calibration = calibrate(scores, weights, lambda, cfg.alpha, cfg.score_kind);
    calibration.num_labels = cal.front().logits.size();
    calibration.provenance = std::move(provenance);
    save_calibration(calibration, args.out_path);

    std::vector<double> sorted = weights;
    std::sort(sorted.begin(), sorted.end());
    out << "threshold " << format_score(calibration.threshold.q) << '\n'
        << "lambda " << num(lambda) << " (" << to_string(cfg.lambda) << ")\n"
        << "weights n=" << n << " min=" << num(sorted.front()) << " median=" << num(sorted[(n - 1) / 2])
        << " max=" << num(sorted.back()) << '\n'
        << "wrote " << args.out_path << '\n';
}

// ---- predict --------------------------------------------------------------

void cmd_predict(const std::string& artifact_path, const std::string& samples_path,
                 const std::string& out_path, std::ostream& out, std::ostream& err) {
    const auto calibration = load_calibration(artifact_path);
    const auto samples = load_samples(samples_path, std::nullopt,
                                      calibration.num_labels ? std::optional(calibration.num_labels) : std::nullopt);
    std::ostringstream csv;
    csv << "id,set_members,set_size,covered\n";
    std::size_t labelled = 0;
    std::size_t covered = 0;
    for (const auto& s : samples) {
        const auto set = predict(calibration, s.logits);
        csv << s.id << ',';
        for (std::size_t i = 0; i < set.members.size(); ++i) csv << (i ? ";" : "") << set.members[i];
        csv << ',' << set.size() << ',';
        if (s.label) {
            const bool hit = set.contains(*s.label);
            csv << (hit ? 1 : 0);
            ++labelled;
            covered += hit ? 1 : 0;
        }
        csv << '\n';
    }
    std::ostream& info = out_path.empty() ? err : out;
    if (out_path.empty()) {
        out << csv.str();
    } else {
        write_text(out_path, csv.str());
        info << "wrote " << out_path << " (" << samples.size() << " rows)\n";
    }
    if (labelled > 0) {
        info << "coverage " << num(static_cast<double>(covered) / static_cast<double>(labelled)) << " ("
             << covered << "/" << labelled << ")\n";
    }
}

// ---- sweep / report -------------------------------------------------------

void cmd_sweep(const std::string& data_dir, const std::string& methods_text, const fs::path& out_dir,
               bool uniform, bool mmlu, const EvalConfig& cfg, std::size_t parallelism, std::ostream& out) {
    const auto datasets = load_dataset_dir(data_dir, mmlu);
    if (datasets.size() < 2) {
        throw Error(ErrorKind::IncompatibleDatasets,
                    data_dir + ": found " + std::to_string(datasets.size()) + " domain(s), need at least 2");
    }
    const auto methods = parse_methods(methods_text);
    if (methods.empty()) throw Error(ErrorKind::InvalidArgument, "no methods selected");
    EvalConfig run = cfg;
    run.uniform_weights = uniform;
    const auto report = sweep_all_pairs(datasets, methods, run, parallelism);
    emit_report(report, out_dir);
    out << "domains " << datasets.size() << ", rows " << report.rows.size() << '\n';
    write_summary(report.rows, run.alpha, out);
    out << "wrote " << (out_dir / "sweep.csv").string() << '\n';
}

void cmd_report(const std::string& csv_path, double alpha, const std::string& out_dir, std::ostream& out) {
    std::ifstream in(csv_path);
    if (!in) throw Error(ErrorKind::IoError, "cannot open " + csv_path);
    const auto rows = parse_csv(in);
    std::ostringstream summary;
    write_summary(rows, alpha, summary);

    const bool has_cp = std::any_of(rows.begin(), rows.end(), [](const auto& r) { return r.method == Method::CP; });
    const bool has_ds = std::any_of(rows.begin(), rows.end(), [](const auto& r) { return r.method == Method::DSCP; });
    std::ostringstream paired;
    if (has_cp && has_ds) write_paired_csv(paired_comparison(rows, alpha, Method::CP, Method::DSCP), paired);

    if (out_dir.empty()) {
        out << summary.str();
        return;
    }
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw Error(ErrorKind::IoError, "cannot create " + out_dir + ": " + ec.message());
    write_text(fs::path(out_dir) / "summary.txt", summary.str());
    if (has_cp && has_ds) write_text(fs::path(out_dir) / "paired_cp_dscp.csv", paired.str());
    out << summary.str();
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"driftcal: domain-shift-aware conformal prediction sets", "driftcal"};
    app.require_subcommand(1);

    RunConfig synth_cfg;
    std::string synth_spec;
    std::string synth_out;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset from a spec file");
    synth->add_option("spec", synth_spec, "Shift or suite spec (JSON)")->required()->check(CLI::ExistingFile);
    synth->add_option("out_dir", synth_out, "Output directory")->required();
    auto* synth_seed = synth->add_option("--seed", synth_cfg.seed, "Seed (falls back to DRIFTCAL_SEED)");

    RunConfig cal_cfg;
    CalibrateArgs cal_args;
    auto* calib = app.add_subcommand("calibrate", "Fit weights and write a calibration artifact");
    calib->add_option("--cal", cal_args.cal_path, "Labelled calibration samples")->required()->check(CLI::ExistingFile);
    calib->add_option("--test", cal_args.test_path, "Unlabelled target-domain samples")->check(CLI::ExistingFile);
    calib->add_option("--out", cal_args.out_path, "Artifact path")->required();
    calib->add_option("--weights-file", cal_args.weights_file, "Externally computed weights, one per line")
        ->check(CLI::ExistingFile);
    calib->add_flag("--uniform-weights", cal_args.uniform, "Use unit weights (reduces to standard CP with lambda 1)");
    calib->add_flag("--mmlu-profile", cal_args.mmlu, "Drop item positions 1,3,5,7,9 of each file");
    const auto cal_opts = add_run_options(*calib, cal_cfg);

    std::string artifact;
    std::string samples;
    std::string predict_out;
    auto* pred = app.add_subcommand("predict", "Emit prediction sets for samples");
    pred->add_option("--artifact", artifact, "Calibration artifact")->required()->check(CLI::ExistingFile);
    pred->add_option("--samples", samples, "Samples to predict")->required()->check(CLI::ExistingFile);
    pred->add_option("--out", predict_out, "CSV output (default stdout)");

    RunConfig sweep_cfg;
    std::string sweep_dir;
    std::string sweep_out;
    std::string methods = "cp,dscp";
    bool sweep_uniform = false;
    bool sweep_mmlu = false;
    auto* sweep = app.add_subcommand("sweep", "Evaluate every ordered domain pair");
    sweep->add_option("dataset_dir", sweep_dir, "Directory of sample files")->required()->check(CLI::ExistingDirectory);
    sweep->add_option("--out-dir", sweep_out, "Report directory")->required();
    sweep->add_option("--methods", methods, "Comma list of cp,dscp,wcp,nexcp")->capture_default_str();
    sweep->add_flag("--uniform-weights", sweep_uniform, "Force unit density-ratio weights");
    sweep->add_flag("--mmlu-profile", sweep_mmlu, "Drop item positions 1,3,5,7,9 of each file");
    auto sweep_opts = add_run_options(*sweep, sweep_cfg);
    sweep_opts.parallelism = sweep->add_option("--parallelism", sweep_cfg.parallelism,
                                               "Concurrent pair evaluations (0 = all cores)");
    sweep_opts.holdout = sweep->add_option("--holdout", sweep_cfg.holdout,
                                           "Fraction of each test domain reserved for classifier training");

    std::string report_csv;
    std::string report_out;
    double report_alpha = 0.1;
    auto* report = app.add_subcommand("report", "Summarize an existing sweep CSV");
    report->add_option("csv", report_csv, "sweep.csv")->required()->check(CLI::ExistingFile);
    report->add_option("--alpha", report_alpha, "Miscoverage level used for the sweep")->capture_default_str();
    report->add_option("--out-dir", report_out, "Write summary.txt and paired data here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*synth) {
            RunOptions o;
            o.seed = synth_seed;
            resolve(synth_cfg, o);
            cmd_synth(synth_spec, synth_out, synth_cfg.seed, out);
        } else if (*calib) {
            resolve(cal_cfg, cal_opts);
            cmd_calibrate(cal_args, to_eval_config(cal_cfg), out);
        } else if (*pred) {
            cmd_predict(artifact, samples, predict_out, out, err);
        } else if (*sweep) {
            resolve(sweep_cfg, sweep_opts);
            cmd_sweep(sweep_dir, methods, sweep_out, sweep_uniform, sweep_mmlu, to_eval_config(sweep_cfg),
                      sweep_cfg.parallelism, out);
        } else if (*report) {
            if (!(report_alpha > 0.0 && report_alpha < 1.0)) {
                throw Error(ErrorKind::InvalidArgument, "alpha must lie in (0,1)");
            }
            cmd_report(report_csv, report_alpha, report_out, out);
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return e.kind() == ErrorKind::IoError ? 1 : 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

}  // namespace driftcal::cli

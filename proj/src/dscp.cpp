#include "driftcal/dscp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "driftcal/error.hpp"
#include "json.hpp"

namespace driftcal {

using nlohmann::json;

namespace {

double parse_double(const std::string& text, const std::string& what) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(text, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos == 0 || pos != text.size() || !std::isfinite(v)) {
        throw Error(ErrorKind::InvalidArgument, "bad " + what + " '" + text + "'");
    }
    return v;
}

}  // namespace

LambdaPolicy parse_lambda_policy(const std::string& text) {
    if (text == "max") return MaxWeightLambda{};
    if (!text.empty() && text.front() == 'q') {
        const double q = parse_double(text.substr(1), "lambda quantile");
        if (!(q > 0.0 && q <= 1.0)) {
            throw Error(ErrorKind::InvalidArgument, "lambda quantile must lie in (0,1]");
        }
        return WeightQuantileLambda{q};
    }
    const double v = parse_double(text, "lambda");
    if (v < 0.0) throw Error(ErrorKind::InvalidArgument, "lambda must be >= 0");
    return FixedLambda{v};
}

std::string to_string(const LambdaPolicy& policy) {
    struct Visitor {
        std::string operator()(const FixedLambda& f) const {
            std::ostringstream os;
            os << "fixed(" << f.value << ")";
            return os.str();
        }
        std::string operator()(const MaxWeightLambda&) const { return "max-weight"; }
        std::string operator()(const WeightQuantileLambda& w) const {
            std::ostringstream os;
            os << "weight-quantile(" << w.q << ")";
            return os.str();
        }
    };
    return std::visit(Visitor{}, policy);
}

std::vector<double> compute_weights(const DensityRatioModel& model,
                                    std::span<const Embedding> cal_embeds) {
    std::vector<double> weights;
    weights.reserve(cal_embeds.size());
    for (const auto& z : cal_embeds) weights.push_back(estimate_ratio(model, z));
    return weights;
}

double resolve_lambda(const LambdaPolicy& policy, std::span<const double> weights) {
    if (const auto* fixed = std::get_if<FixedLambda>(&policy)) return fixed->value;
    if (weights.empty()) {
        throw Error(ErrorKind::EmptyCalibration, "lambda policy needs calibration weights");
    }
    if (std::holds_alternative<MaxWeightLambda>(policy)) {
        return *std::max_element(weights.begin(), weights.end());
    }
    const double q = std::get<WeightQuantileLambda>(policy).q;
    std::vector<double> sorted(weights.begin(), weights.end());
    std::sort(sorted.begin(), sorted.end());
    const auto n = static_cast<double>(sorted.size());
    auto rank = static_cast<std::size_t>(std::ceil(q * n - kQuantileTolerance));
    rank = std::clamp<std::size_t>(rank, 1, sorted.size());
    return sorted[rank - 1];
}

DscpCalibration calibrate(std::span<const double> cal_scores, std::span<const double> weights,
                          double lambda, double alpha, ScoreKind kind) {
    if (cal_scores.empty()) throw Error(ErrorKind::EmptyCalibration, "no calibration scores");
    if (cal_scores.size() != weights.size()) {
        throw Error(ErrorKind::ShapeError, "scores and weights differ in length");
    }
    DscpCalibration cal;
    cal.threshold = threshold_from(build_distribution(cal_scores, weights, lambda), alpha);
    cal.weights.assign(weights.begin(), weights.end());
    cal.lambda = lambda;
    cal.alpha = alpha;
    cal.score_kind = kind;
    return cal;
}

PredictionSet predict(const DscpCalibration& cal, std::span<const double> test_logits) {
    if (cal.num_labels != 0 && test_logits.size() != cal.num_labels) {
        throw Error(ErrorKind::ShapeError, "calibration expects K=" + std::to_string(cal.num_labels) +
                                               ", got " + std::to_string(test_logits.size()));
    }
    return prediction_set(softmax(test_logits), cal.threshold, cal.score_kind);
}

std::string calibration_to_json(const DscpCalibration& cal) {
    json j;
    j["alpha"] = cal.alpha;
    j["lambda"] = cal.lambda;
    j["score_kind"] = std::string(to_string(cal.score_kind));
    if (cal.threshold.q.is_infinite()) {
        j["threshold"] = "inf";
    } else {
        j["threshold"] = cal.threshold.q.value();
    }
    j["level"] = cal.threshold.level;
    j["num_labels"] = cal.num_labels;
    j["weights"] = cal.weights;
    j["provenance"] = cal.provenance;
    return j.dump(2);
}

DscpCalibration calibration_from_json(const std::string& text) {
    DscpCalibration cal;
    try {
        const json j = json::parse(text);
        cal.alpha = j.at("alpha").get<double>();
        cal.lambda = j.at("lambda").get<double>();
        cal.score_kind = parse_score_kind(j.at("score_kind").get<std::string>());
        const auto& t = j.at("threshold");
        if (t.is_string()) {
            cal.threshold.q = parse_score(t.get<std::string>());
        } else {
            cal.threshold.q = ExtendedScore(t.get<double>());
        }
        cal.threshold.level = j.value("level", 1.0 - cal.alpha);
        cal.num_labels = j.value("num_labels", std::size_t{0});
        cal.weights = j.at("weights").get<std::vector<double>>();
        if (j.contains("provenance")) {
            cal.provenance = j.at("provenance").get<std::map<std::string, std::string>>();
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ParseError, std::string("calibration artifact: ") + e.what());
    }
    if (!(cal.alpha > 0.0 && cal.alpha < 1.0) || !(cal.lambda >= 0.0) || cal.weights.empty()) {
        throw Error(ErrorKind::ParseError, "calibration artifact has invalid alpha, lambda or weights");
    }
    for (double w : cal.weights) {
        if (!(w >= 0.0)) throw Error(ErrorKind::ParseError, "calibration artifact has a negative weight");
    }
    return cal;
}

void save_calibration(const DscpCalibration& cal, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
    out << calibration_to_json(cal) << '\n';
    if (!out) throw Error(ErrorKind::IoError, "write failure on " + path.string());
}

DscpCalibration load_calibration(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return calibration_from_json(buf.str());
}

}  // namespace driftcal

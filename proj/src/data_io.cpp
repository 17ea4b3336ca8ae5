#include "driftcal/data_io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>

#include "driftcal/error.hpp"
#include "json.hpp"

namespace driftcal {

using nlohmann::json;

namespace {

std::vector<double> parse_vector(const json& j, const char* field, std::size_t line) {
    if (!j.contains(field) || !j[field].is_array()) {
        throw LineError(ErrorKind::ParseError, line, std::string("missing array '") + field + "'");
    }
    std::vector<double> out;
    out.reserve(j[field].size());
    for (const auto& v : j[field]) {
        if (!v.is_number()) {
            throw LineError(ErrorKind::ParseError, line, std::string("non-numeric entry in '") + field + "'");
        }
        const double x = v.get<double>();
        if (!std::isfinite(x)) {
            throw LineError(ErrorKind::ParseError, line, std::string("non-finite entry in '") + field + "'");
        }
        out.push_back(x);
    }
    return out;
}

std::string parse_string(const json& j, const char* field, std::size_t line) {
    if (!j.contains(field) || !j[field].is_string()) {
        throw LineError(ErrorKind::ParseError, line, std::string("missing string '") + field + "'");
    }
    return j[field].get<std::string>();
}

bool all_finite(const std::vector<double>& v) {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

}  // namespace

std::vector<SampleRecord> load_samples(const std::filesystem::path& path,
                                       std::optional<std::size_t> expected_d,
                                       std::optional<std::size_t> expected_k) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());

    std::vector<SampleRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;

        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw LineError(ErrorKind::ParseError, line_no, path.string() + ": " + e.what());
        }
        if (!j.is_object()) {
            throw LineError(ErrorKind::ParseError, line_no, path.string() + ": record is not an object");
        }

        SampleRecord rec;
        rec.id = parse_string(j, "id", line_no);
        rec.domain = parse_string(j, "domain", line_no);
        rec.embedding = parse_vector(j, "embedding", line_no);
        rec.logits = parse_vector(j, "logits", line_no);
        if (rec.logits.size() < 2) {
            throw LineError(ErrorKind::DimensionMismatch, line_no, "need at least two logits");
        }
        if (!expected_d) expected_d = rec.embedding.size();
        if (!expected_k) expected_k = rec.logits.size();
        if (rec.embedding.size() != *expected_d) {
            throw LineError(ErrorKind::DimensionMismatch, line_no,
                            path.string() + ": embedding has " + std::to_string(rec.embedding.size()) +
                                " entries, expected " + std::to_string(*expected_d));
        }
        if (rec.logits.size() != *expected_k) {
            throw LineError(ErrorKind::DimensionMismatch, line_no,
                            path.string() + ": logits have " + std::to_string(rec.logits.size()) +
                                " entries, expected " + std::to_string(*expected_k));
        }
        if (j.contains("label") && !j["label"].is_null()) {
            const auto& lj = j["label"];
            if (!lj.is_number_integer()) {
                throw LineError(ErrorKind::ParseError, line_no, "label must be an integer");
            }
            const auto label = lj.get<long long>();
            if (label < 0 || static_cast<std::size_t>(label) >= *expected_k) {
                throw LineError(ErrorKind::LabelOutOfRange, line_no,
                                path.string() + ": label " + std::to_string(label) +
                                    " outside [0," + std::to_string(*expected_k) + ")");
            }
            rec.label = static_cast<std::size_t>(label);
        }
        if (j.contains("text") && !j["text"].is_null()) {
            rec.text = parse_string(j, "text", line_no);
        }
        records.push_back(std::move(rec));
    }
    if (in.bad()) throw Error(ErrorKind::IoError, "read failure on " + path.string());
    return records;
}

std::string encode_record(const SampleRecord& record) {
    json j = json::object();
    j["id"] = record.id;
    j["domain"] = record.domain;
    j["embedding"] = record.embedding;
    j["logits"] = record.logits;
    if (record.label) j["label"] = *record.label;
    if (record.text) j["text"] = *record.text;
    return j.dump();
}

void write_samples(std::span<const SampleRecord> records, const std::filesystem::path& path) {
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        const std::string where = "record " + std::to_string(i) + " ('" + r.id + "')";
        if (!all_finite(r.embedding) || !all_finite(r.logits)) {
            throw Error(ErrorKind::RecordError, where + " has a non-finite value");
        }
        if (r.embedding.size() != records.front().embedding.size() ||
            r.logits.size() != records.front().logits.size()) {
            throw Error(ErrorKind::RecordError, where + " has inconsistent dimensions");
        }
        if (r.logits.size() < 2) {
            throw Error(ErrorKind::RecordError, where + " needs at least two logits");
        }
        if (r.label && *r.label >= r.logits.size()) {
            throw Error(ErrorKind::RecordError, where + " label out of range");
        }
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
    for (const auto& r : records) out << encode_record(r) << '\n';
    out.flush();
    if (!out) throw Error(ErrorKind::IoError, "write failure on " + path.string());
}

std::vector<SampleRecord> apply_mmlu_profile(std::vector<SampleRecord> records) {
    std::vector<SampleRecord> kept;
    kept.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        bool excluded = false;
        for (std::size_t pos : kMmluExcludedPositions) excluded = excluded || pos == i;
        if (!excluded) kept.push_back(std::move(records[i]));
    }
    return kept;
}

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());

    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
        throw Error(ErrorKind::IoError, "sha256 initialisation failed");
    }
    std::array<char, 1 << 16> buf{};
    while (in) {
        in.read(buf.data(), buf.size());
        if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), digest.data(), &len);

    std::string hex;
    hex.reserve(len * 2);
    char pair[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(pair, sizeof(pair), "%02x", digest[i]);
        hex += pair;
    }
    return hex;
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
    json j;
    j["d"] = manifest.d;
    j["K"] = manifest.k;
    j["profile"] = manifest.profile == DatasetProfile::Mmlu ? "mmlu" : "generic";
    j["files"] = json::array();
    for (const auto& f : manifest.files) {
        j["files"].push_back({{"path", f.path}, {"domain", f.domain}, {"sha256", f.sha256}});
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
    out << j.dump(2) << '\n';
    if (!out) throw Error(ErrorKind::IoError, "write failure on " + path.string());
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
    DatasetManifest m;
    try {
        const json j = json::parse(in);
        m.d = j.at("d").get<std::size_t>();
        m.k = j.at("K").get<std::size_t>();
        const auto profile = j.value("profile", std::string("generic"));
        if (profile == "mmlu") {
            m.profile = DatasetProfile::Mmlu;
        } else if (profile != "generic") {
            throw Error(ErrorKind::ParseError, "unknown profile '" + profile + "'");
        }
        for (const auto& f : j.at("files")) {
            m.files.push_back({f.at("path").get<std::string>(), f.at("domain").get<std::string>(),
                               f.at("sha256").get<std::string>()});
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ParseError, path.string() + ": " + e.what());
    }
    return m;
}

void verify_manifest(const DatasetManifest& manifest, const std::filesystem::path& base_dir) {
    for (const auto& f : manifest.files) {
        const auto actual = sha256_file(base_dir / f.path);
        if (actual != f.sha256) {
            throw Error(ErrorKind::HashMismatch,
                        f.path + ": expected sha256 " + f.sha256 + ", found " + actual);
        }
    }
}

}  // namespace driftcal

namespace driftcal {

std::vector<DomainDataset> load_dataset_dir(const std::filesystem::path& dir, bool force_mmlu) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw Error(ErrorKind::IoError, dir.string() + " is not a directory");

    std::vector<fs::path> files;
    bool mmlu = force_mmlu;
    std::optional<std::size_t> d;
    std::optional<std::size_t> k;
    const fs::path manifest_path = dir / "manifest.json";
    if (fs::exists(manifest_path)) {
        const auto manifest = read_manifest(manifest_path);
        verify_manifest(manifest, dir);
        mmlu = mmlu || manifest.profile == DatasetProfile::Mmlu;
        d = manifest.d;
        k = manifest.k;
        for (const auto& f : manifest.files) files.push_back(dir / f.path);
    } else {
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (entry.is_regular_file() && entry.path().extension() == ".jsonl") {
                files.push_back(entry.path());
            }
        }
        std::sort(files.begin(), files.end());
    }

    std::map<std::string, std::vector<SampleRecord>> by_domain;
    for (const auto& file : files) {
        auto records = load_samples(file, d, k);
        if (!records.empty()) {
            d = records.front().embedding.size();
            k = records.front().logits.size();
        }
        if (mmlu) records = apply_mmlu_profile(std::move(records));
        for (auto& r : records) by_domain[r.domain].push_back(std::move(r));
    }
    std::vector<DomainDataset> out;
    for (auto& [domain, samples] : by_domain) out.push_back({domain, std::move(samples)});
    return out;
}

}  // namespace driftcal

#pragma once

// Line-delimited JSON sample records, the repo's interchange format:
//   {"id":"q17","domain":"physics","embedding":[...],"logits":[...],"label":2,"text":"..."}
// "label" and "text" are optional. Numbers use shortest round-trip decimals.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace driftcal {

struct SampleRecord {
    std::string id;
    std::string domain;
    std::vector<double> embedding;
    std::vector<double> logits;
    std::optional<std::size_t> label;
    std::optional<std::string> text;

    friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

// A named collection of samples from one domain (e.g. one subject).
struct DomainDataset {
    std::string domain_id;
    std::vector<SampleRecord> samples;
};

// Empty file -> empty vector. When expected_d / expected_k are unset they are
// taken from the first record and enforced on the rest. Throws LineError with
// ParseError, DimensionMismatch or LabelOutOfRange; IoError when unreadable.
std::vector<SampleRecord> load_samples(const std::filesystem::path& path,
                                       std::optional<std::size_t> expected_d = std::nullopt,
                                       std::optional<std::size_t> expected_k = std::nullopt);

// Throws RecordError for non-finite numbers, labels out of range or
// inconsistent dimensions (nothing is written), IoError on write failure.
void write_samples(std::span<const SampleRecord> records, const std::filesystem::path& path);

std::string encode_record(const SampleRecord& record);

inline constexpr std::size_t kMmluExcludedPositions[] = {1, 3, 5, 7, 9};

// Drops records at positions 1, 3, 5, 7 and 9.
std::vector<SampleRecord> apply_mmlu_profile(std::vector<SampleRecord> records);

enum class DatasetProfile { Generic, Mmlu };

struct ManifestEntry {
    std::string path;  // relative to the manifest's directory
    std::string domain;
    std::string sha256;
};

struct DatasetManifest {
    std::vector<ManifestEntry> files;
    std::size_t d = 0;
    std::size_t k = 0;
    DatasetProfile profile = DatasetProfile::Generic;
};

std::string sha256_file(const std::filesystem::path& path);

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest read_manifest(const std::filesystem::path& path);

// Throws HashMismatch naming the first file whose digest differs.
void verify_manifest(const DatasetManifest& manifest, const std::filesystem::path& base_dir);

// Loads every sample file of a dataset directory and groups records by their
// "domain" field, sorted by domain id. With a manifest.json the listed files
// are hash-verified first and its profile applies; otherwise all *.jsonl
// files are read. force_mmlu applies the MMLU exclusion to each file.
std::vector<DomainDataset> load_dataset_dir(const std::filesystem::path& dir,
                                            bool force_mmlu = false);

}  // namespace driftcal

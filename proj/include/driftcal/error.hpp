#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace driftcal {

enum class ErrorKind {
    InvalidLogits,
    InvalidLabel,
    ShapeError,
    InvalidWeight,
    DegenerateDistribution,
    InvalidQuantileLevel,
    EmptyCalibration,
    DegenerateTraining,
    InvalidProbability,
    ParseError,
    LengthMismatch,
    NegativeWeight,
    InvalidSpec,
    InvalidTV,
    IncompatibleDatasets,
    MissingMethod,
    DimensionMismatch,
    LabelOutOfRange,
    RecordError,
    HashMismatch,
    IoError,
    InvalidArgument,
};

std::string_view to_string(ErrorKind kind) noexcept;

// Single exception type for the library; callers branch on kind().
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message);

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

// Errors tied to a line of an input file. line() is 1-based.
class LineError : public Error {
public:
    LineError(ErrorKind kind, std::size_t line, const std::string& message);

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

}  // namespace driftcal

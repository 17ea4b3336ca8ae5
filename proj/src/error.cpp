#include "driftcal/error.hpp"

namespace driftcal {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::InvalidLogits: return "InvalidLogits";
        case ErrorKind::InvalidLabel: return "InvalidLabel";
        case ErrorKind::ShapeError: return "ShapeError";
        case ErrorKind::InvalidWeight: return "InvalidWeight";
        case ErrorKind::DegenerateDistribution: return "DegenerateDistribution";
        case ErrorKind::InvalidQuantileLevel: return "InvalidQuantileLevel";
        case ErrorKind::EmptyCalibration: return "EmptyCalibration";
        case ErrorKind::DegenerateTraining: return "DegenerateTraining";
        case ErrorKind::InvalidProbability: return "InvalidProbability";
        case ErrorKind::ParseError: return "ParseError";
        case ErrorKind::LengthMismatch: return "LengthMismatch";
        case ErrorKind::NegativeWeight: return "NegativeWeight";
        case ErrorKind::InvalidSpec: return "InvalidSpec";
        case ErrorKind::InvalidTV: return "InvalidTV";
        case ErrorKind::IncompatibleDatasets: return "IncompatibleDatasets";
        case ErrorKind::MissingMethod: return "MissingMethod";
        case ErrorKind::DimensionMismatch: return "DimensionMismatch";
        case ErrorKind::LabelOutOfRange: return "LabelOutOfRange";
        case ErrorKind::RecordError: return "RecordError";
        case ErrorKind::HashMismatch: return "HashMismatch";
        case ErrorKind::IoError: return "IoError";
        case ErrorKind::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

LineError::LineError(ErrorKind kind, std::size_t line, const std::string& message)
    : Error(kind, "line " + std::to_string(line) + ": " + message), line_(line) {}

}  // namespace driftcal

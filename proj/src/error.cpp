#include "cirfuse/error.hpp"

namespace cirfuse {

std::string_view error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::NonFiniteEntry: return "NonFiniteEntry";
    case ErrorCode::NotUnitNorm: return "NotUnitNorm";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::UnknownId: return "UnknownId";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::NonNegativeMin: return "NonNegativeMin";
    case ErrorCode::EmptyPositiveCorpus: return "EmptyPositiveCorpus";
    case ErrorCode::NotSymmetric: return "NotSymmetric";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::NoPositiveEigenvalues: return "NoPositiveEigenvalues";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::EmbedderUnavailable: return "EmbedderUnavailable";
    case ErrorCode::MissingOfflineEntry: return "MissingOfflineEntry";
    case ErrorCode::InputRejected: return "InputRejected";
    case ErrorCode::EmptyDatabase: return "EmptyDatabase";
    case ErrorCode::NonNegativeMinStat: return "NonNegativeMinStat";
    case ErrorCode::InvalidWeight: return "InvalidWeight";
    case ErrorCode::NegativeInputForGeometricBlend: return "NegativeInputForGeometricBlend";
    case ErrorCode::FingerprintMismatch: return "FingerprintMismatch";
    case ErrorCode::NoPositives: return "NoPositives";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::InvalidK: return "InvalidK";
    case ErrorCode::MissingEmbedding: return "MissingEmbedding";
    case ErrorCode::ManifestInvariantViolation: return "ManifestInvariantViolation";
    case ErrorCode::ConfigDependencyViolation: return "ConfigDependencyViolation";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ParseError: return "ParseError";
  }
  return "Unknown";
}

}  // namespace cirfuse

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cirfuse {

enum class ErrorCode {
  IoError,
  BadMagic,
  DimMismatch,
  NonFiniteEntry,
  NotUnitNorm,
  DuplicateId,
  UnknownId,
  EmptySet,
  NonNegativeMin,
  EmptyPositiveCorpus,
  NotSymmetric,
  NoConvergence,
  NoPositiveEigenvalues,
  EmptyCorpus,
  EmbedderUnavailable,
  MissingOfflineEntry,
  InputRejected,
  EmptyDatabase,
  NonNegativeMinStat,
  InvalidWeight,
  NegativeInputForGeometricBlend,
  FingerprintMismatch,
  NoPositives,
  EmptyInput,
  InvalidK,
  MissingEmbedding,
  ManifestInvariantViolation,
  ConfigDependencyViolation,
  InvalidArgument,
  ParseError,
};

std::string_view error_code_name(ErrorCode code) noexcept;

/// All library failures surface as this exception; `code()` is the
/// machine-readable category and `what()` carries the context.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace cirfuse

#pragma once

#include <stdexcept>
#include <string>

namespace nanopk {

enum class Errc {
  // data
  Io,
  MissingColumn,
  EmptyFile,
  AllRowsDropped,
  UnknownCategory,
  TooFewSamples,
  EmptyValidation,
  ZeroVarianceTargets,
  TooFewPairs,
  AllZeroDifferences,
  BadCheckpoint,
  // configuration / usage
  BadRatios,
  BadConfig,
  BadRate,
  UnknownOrgan,
  ShapeMismatch,
  BatchTooSmall,
  // numeric
  DomainError,
  NonFinite,
  NonFiniteLoss,
  SingularSystem,
  GraphCycle,
};

inline const char* to_string(Errc code) {
  switch (code) {
    case Errc::Io: return "Io";
    case Errc::MissingColumn: return "MissingColumn";
    case Errc::EmptyFile: return "EmptyFile";
    case Errc::AllRowsDropped: return "AllRowsDropped";
    case Errc::UnknownCategory: return "UnknownCategory";
    case Errc::TooFewSamples: return "TooFewSamples";
    case Errc::EmptyValidation: return "EmptyValidation";
    case Errc::ZeroVarianceTargets: return "ZeroVarianceTargets";
    case Errc::TooFewPairs: return "TooFewPairs";
    case Errc::AllZeroDifferences: return "AllZeroDifferences";
    case Errc::BadCheckpoint: return "BadCheckpoint";
    case Errc::BadRatios: return "BadRatios";
    case Errc::BadConfig: return "BadConfig";
    case Errc::BadRate: return "BadRate";
    case Errc::UnknownOrgan: return "UnknownOrgan";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::BatchTooSmall: return "BatchTooSmall";
    case Errc::DomainError: return "DomainError";
    case Errc::NonFinite: return "NonFinite";
    case Errc::NonFiniteLoss: return "NonFiniteLoss";
    case Errc::SingularSystem: return "SingularSystem";
    case Errc::GraphCycle: return "GraphCycle";
  }
  return "Unknown";
}

/// Broad failure category; the CLI maps these onto exit codes.
enum class ErrorClass { Usage, Data, Numeric };

inline ErrorClass classify(Errc code) {
  switch (code) {
    case Errc::BadRatios:
    case Errc::BadConfig:
    case Errc::BadRate:
    case Errc::UnknownOrgan:
    case Errc::ShapeMismatch:
    case Errc::BatchTooSmall:
      return ErrorClass::Usage;
    case Errc::DomainError:
    case Errc::NonFinite:
    case Errc::NonFiniteLoss:
    case Errc::SingularSystem:
    case Errc::GraphCycle:
      return ErrorClass::Numeric;
    default:
      return ErrorClass::Data;
  }
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace nanopk

#include "smad/common/error.hpp"

namespace smad {

std::string_view error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::InputTooShort: return "InputTooShort";
    case ErrorCode::BadConfig: return "BadConfig";
    case ErrorCode::DegenerateNormalization: return "DegenerateNormalization";
    case ErrorCode::MissingMetadata: return "MissingMetadata";
    case ErrorCode::InvalidSeverity: return "InvalidSeverity";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ShapeError: return "ShapeError";
    case ErrorCode::BadLoss: return "BadLoss";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::LabelLeakError: return "LabelLeakError";
    case ErrorCode::BadCheckpoint: return "BadCheckpoint";
    case ErrorCode::DegenerateVariance: return "DegenerateVariance";
    case ErrorCode::DegenerateReference: return "DegenerateReference";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::ConvergenceError: return "ConvergenceError";
    case ErrorCode::SingleClassError: return "SingleClassError";
    case ErrorCode::BadManifest: return "BadManifest";
    case ErrorCode::RoundFailure: return "RoundFailure";
  }
  return "Unknown";
}

Error::Error(std::string_view module, ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(module) + "::" + std::string(error_name(code)) + ": " +
                         message),
      module_(module),
      code_(code) {}

std::string Error::qualified_name() const {
  return module_ + "::" + std::string(error_name(code_));
}

}  // namespace smad

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace smad {

enum class ErrorCode {
  InputTooShort,
  BadConfig,
  DegenerateNormalization,
  MissingMetadata,
  InvalidSeverity,
  IoError,
  ShapeError,
  BadLoss,
  NonFiniteGradient,
  LabelLeakError,
  BadCheckpoint,
  DegenerateVariance,
  DegenerateReference,
  TooFewSamples,
  ConvergenceError,
  SingleClassError,
  BadManifest,
  RoundFailure,
};

std::string_view error_name(ErrorCode code);

// All library failures surface as smad::Error. The module tag gives the
// qualified name printed by the CLI, e.g. "dsp::InputTooShort".
class Error : public std::runtime_error {
 public:
  Error(std::string_view module, ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }
  const std::string& module() const noexcept { return module_; }
  std::string qualified_name() const;

 private:
  std::string module_;
  ErrorCode code_;
};

}  // namespace smad

#pragma once

#include <stdexcept>
#include <string>

namespace fsep {

enum class ErrorCode {
  // graph / tensor
  ShapeMismatch,
  NonFiniteInput,
  NonScalarLoss,
  // data
  EmptyDirectory,
  UnreadableImage,
  NonSquareImage,
  OverlappingSplits,
  UnknownLabel,
  // episodes
  SampleTooLarge,
  InsufficientExamples,
  WayExceedsClasses,
  EnumerationTooLarge,
  // embed
  InvalidSpec,
  BatchTooSmall,
  LengthMismatch,
  // protonet
  EmptySupport,
  ZeroVectorCosine,
  // train
  NonFiniteLoss,
  WayOrderingViolated,
  VersionMismatch,
  CorruptFile,
  NonFiniteGradient,
  // config / generic argument validation
  InvalidArgument,
  UnknownKey,
  InvalidValue,
  IoFailure,
};

const char* error_code_name(ErrorCode code);

/// Whether the code indicates bad usage/configuration (CLI exit 1) rather
/// than a runtime failure (CLI exit 2).
bool is_usage_error(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace fsep

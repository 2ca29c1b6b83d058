#include "fsep/error.hpp"

namespace fsep {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::NonScalarLoss: return "NonScalarLoss";
    case ErrorCode::EmptyDirectory: return "EmptyDirectory";
    case ErrorCode::UnreadableImage: return "UnreadableImage";
    case ErrorCode::NonSquareImage: return "NonSquareImage";
    case ErrorCode::OverlappingSplits: return "OverlappingSplits";
    case ErrorCode::UnknownLabel: return "UnknownLabel";
    case ErrorCode::SampleTooLarge: return "SampleTooLarge";
    case ErrorCode::InsufficientExamples: return "InsufficientExamples";
    case ErrorCode::WayExceedsClasses: return "WayExceedsClasses";
    case ErrorCode::EnumerationTooLarge: return "EnumerationTooLarge";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::BatchTooSmall: return "BatchTooSmall";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::EmptySupport: return "EmptySupport";
    case ErrorCode::ZeroVectorCosine: return "ZeroVectorCosine";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::WayOrderingViolated: return "WayOrderingViolated";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::CorruptFile: return "CorruptFile";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::UnknownKey: return "UnknownKey";
    case ErrorCode::InvalidValue: return "InvalidValue";
    case ErrorCode::IoFailure: return "IoFailure";
  }
  return "UnknownError";
}

bool is_usage_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::UnknownKey:
    case ErrorCode::InvalidValue:
    case ErrorCode::InvalidSpec:
    case ErrorCode::WayOrderingViolated:
    case ErrorCode::WayExceedsClasses:
      return true;
    default:
      return false;
  }
}

}  // namespace fsep

#pragma once

#include <stdexcept>
#include <string>

namespace mfk {

enum class ErrorCode {
  // validation: bad inputs, caller can fix the call
  InvalidArgument,
  DimensionMismatch,
  LengthMismatch,
  InsufficientViews,
  TooFewCorners,
  NoVisibleMarkers,
  NoDisplacement,
  RotationDetected,
  InsufficientRotation,
  EmptySession,
  MissingBoundary,
  TooShort,
  SchemaVersionMismatch,
  CorruptStream,
  InvalidSpec,
  IoError,
  ConstraintViolation,
  NoEvents,
  // numerical: inputs were plausible but the computation failed
  BehindCamera,
  DegenerateGeometry,
  DegenerateConfiguration,
  NonConvergence,
  NonDecreasingLoss,
  ModelViolation,
};

enum class ErrorKind { Validation, Numerical };

constexpr ErrorKind kind_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::BehindCamera:
    case ErrorCode::DegenerateGeometry:
    case ErrorCode::DegenerateConfiguration:
    case ErrorCode::NonConvergence:
    case ErrorCode::NonDecreasingLoss:
    case ErrorCode::ModelViolation:
      return ErrorKind::Numerical;
    default:
      return ErrorKind::Validation;
  }
}

constexpr const char* name_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::InsufficientViews: return "InsufficientViews";
    case ErrorCode::TooFewCorners: return "TooFewCorners";
    case ErrorCode::NoVisibleMarkers: return "NoVisibleMarkers";
    case ErrorCode::NoDisplacement: return "NoDisplacement";
    case ErrorCode::RotationDetected: return "RotationDetected";
    case ErrorCode::InsufficientRotation: return "InsufficientRotation";
    case ErrorCode::EmptySession: return "EmptySession";
    case ErrorCode::MissingBoundary: return "MissingBoundary";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::SchemaVersionMismatch: return "SchemaVersionMismatch";
    case ErrorCode::CorruptStream: return "CorruptStream";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ConstraintViolation: return "ConstraintViolation";
    case ErrorCode::NoEvents: return "NoEvents";
    case ErrorCode::BehindCamera: return "BehindCamera";
    case ErrorCode::DegenerateGeometry: return "DegenerateGeometry";
    case ErrorCode::DegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::NonDecreasingLoss: return "NonDecreasingLoss";
    case ErrorCode::ModelViolation: return "ModelViolation";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(name_of(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  ErrorKind kind() const noexcept { return kind_of(code_); }

 private:
  ErrorCode code_;
};

}  // namespace mfk

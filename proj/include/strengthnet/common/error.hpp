#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace strengthnet {

enum class ErrorCode {
  kIoError,
  kNotWav,
  kUnsupportedFormat,
  kTooShort,
  kEmptyCorpus,
  kTooFewFrames,
  kInsufficientData,
  kDegenerateFeatures,
  kDimensionMismatch,
  kDimensionTooLarge,
  kShapeMismatch,
  kNonFiniteValue,
  kNotScalarLoss,
  kCorruptCheckpoint,
  kVersionMismatch,
  kMissingRanker,
  kEmptyManifest,
  kMissingFeature,
  kNonFiniteLoss,
  kLengthMismatch,
  kEmpty,
  kOutOfRange,
  kZeroVariance,
  kInvalidArgument,
  kParseError,
};

constexpr std::string_view error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kNotWav: return "NotWav";
    case ErrorCode::kUnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::kTooShort: return "TooShort";
    case ErrorCode::kEmptyCorpus: return "EmptyCorpus";
    case ErrorCode::kTooFewFrames: return "TooFewFrames";
    case ErrorCode::kInsufficientData: return "InsufficientData";
    case ErrorCode::kDegenerateFeatures: return "DegenerateFeatures";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kDimensionTooLarge: return "DimensionTooLarge";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kNonFiniteValue: return "NonFiniteValue";
    case ErrorCode::kNotScalarLoss: return "NotScalarLoss";
    case ErrorCode::kCorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorCode::kVersionMismatch: return "VersionMismatch";
    case ErrorCode::kMissingRanker: return "MissingRanker";
    case ErrorCode::kEmptyManifest: return "EmptyManifest";
    case ErrorCode::kMissingFeature: return "MissingFeature";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kEmpty: return "Empty";
    case ErrorCode::kOutOfRange: return "OutOfRange";
    case ErrorCode::kZeroVariance: return "ZeroVariance";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kParseError: return "ParseError";
  }
  return "Unknown";
}

/// Every failure in the library is reported as an Error carrying a code that
/// callers (and the CLI) can switch on.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_name(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace strengthnet

#include "uhrnet/error.hpp"

namespace uhrnet {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::UnexpectedCharacter: return "UnexpectedCharacter";
    case ErrorCode::ZeroModuleCount: return "ZeroModuleCount";
    case ErrorCode::ModuleCountTooLarge: return "ModuleCountTooLarge";
    case ErrorCode::ResolutionUnderflow: return "ResolutionUnderflow";
    case ErrorCode::ResolutionOverflow: return "ResolutionOverflow";
    case ErrorCode::DanglingDirection: return "DanglingDirection";
    case ErrorCode::MisplacedTerminalMarker: return "MisplacedTerminalMarker";
    case ErrorCode::InvalidSequence: return "InvalidSequence";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::WidthOverflow: return "WidthOverflow";
    case ErrorCode::UnknownPreset: return "UnknownPreset";
    case ErrorCode::IndivisibleInput: return "IndivisibleInput";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::ShapesMissing: return "ShapesMissing";
    case ErrorCode::OddChannelCount: return "OddChannelCount";
    case ErrorCode::TapeMismatch: return "TapeMismatch";
    case ErrorCode::ConventionMismatch: return "ConventionMismatch";
    case ErrorCode::WeightMissing: return "WeightMissing";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
  }
  return "Unknown";
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::IndivisibleInput:
    case ErrorCode::ShapeMismatch:
    case ErrorCode::ShapesMissing:
    case ErrorCode::OddChannelCount:
    case ErrorCode::WeightMissing:
      return 3;
    case ErrorCode::IoError:
    case ErrorCode::FormatError:
    case ErrorCode::ChecksumMismatch:
      return 4;
    case ErrorCode::NonFiniteGradient:
    case ErrorCode::TapeMismatch:
      return 5;
    default:
      return 2;
  }
}

Error::Error(ErrorCode code, const std::string& message,
             std::optional<std::size_t> location)
    : std::runtime_error(message), code_(code), location_(location) {}

}  // namespace uhrnet

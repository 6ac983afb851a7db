#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace uhrnet {

enum class ErrorCode {
  // structure notation
  EmptyInput,
  UnexpectedCharacter,
  ZeroModuleCount,
  ModuleCountTooLarge,
  ResolutionUnderflow,
  ResolutionOverflow,
  DanglingDirection,
  MisplacedTerminalMarker,
  // graph construction and shapes
  InvalidSequence,
  InvalidConfig,
  WidthOverflow,
  UnknownPreset,
  IndivisibleInput,
  ShapeMismatch,
  ShapesMissing,
  // tensors and autodiff
  OddChannelCount,
  TapeMismatch,
  // analysis
  ConventionMismatch,
  // runtime and persistence
  WeightMissing,
  IoError,
  FormatError,
  ChecksumMismatch,
  NonFiniteGradient,
};

const char* to_string(ErrorCode code);

// Exit status the CLI reports for an error of this code.
int exit_code_for(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        std::optional<std::size_t> location = std::nullopt);

  ErrorCode code() const noexcept { return code_; }

  // Byte position for parse errors, file offset for format errors, node id for
  // graph errors. Empty when the error has no natural location.
  std::optional<std::size_t> location() const noexcept { return location_; }

 private:
  ErrorCode code_;
  std::optional<std::size_t> location_;
};

}  // namespace uhrnet

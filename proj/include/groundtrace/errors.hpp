#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace groundtrace {

enum class ErrorCode {
  // geometry
  NonPositiveDepth,
  OutOfBounds,
  DegenerateConfiguration,
  NoConsensus,
  // manifest
  SyntaxError,
  SchemaError,
  SemanticError,
  // layout
  PlacementExhausted,
  CyclicSupport,
  SettleFailed,
  // grounding
  MaskTooSmall,
  InsufficientCorrespondences,
  TooFewSurvivors,
  // kinematics
  JointLimitViolation,
  IkDiverged,
  JointJumpExceeded,
  // providers
  RoleMismatch,
  MissingArtifact,
  TargetOutOfView,
  // dataset
  DuplicateEpisode,
  IoFailure,
  DiscontinuousChain,
  // cli
  UnknownFormat,
  ConfigError,
};

std::string_view to_string(ErrorCode code);

/// Structured failure raised by every module. `index` carries the frame or
/// step number for errors that are reported per element.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        std::optional<std::int64_t> index = std::nullopt);

  ErrorCode code() const noexcept { return code_; }
  const std::optional<std::int64_t>& index() const noexcept { return index_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::optional<std::int64_t> index_;
  std::string detail_;
};

}  // namespace groundtrace

#include "groundtrace/errors.hpp"

namespace groundtrace {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonPositiveDepth: return "NonPositiveDepth";
    case ErrorCode::OutOfBounds: return "OutOfBounds";
    case ErrorCode::DegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorCode::NoConsensus: return "NoConsensus";
    case ErrorCode::SyntaxError: return "SyntaxError";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::SemanticError: return "SemanticError";
    case ErrorCode::PlacementExhausted: return "PlacementExhausted";
    case ErrorCode::CyclicSupport: return "CyclicSupport";
    case ErrorCode::SettleFailed: return "SettleFailed";
    case ErrorCode::MaskTooSmall: return "MaskTooSmall";
    case ErrorCode::InsufficientCorrespondences: return "InsufficientCorrespondences";
    case ErrorCode::TooFewSurvivors: return "TooFewSurvivors";
    case ErrorCode::JointLimitViolation: return "JointLimitViolation";
    case ErrorCode::IkDiverged: return "IkDiverged";
    case ErrorCode::JointJumpExceeded: return "JointJumpExceeded";
    case ErrorCode::RoleMismatch: return "RoleMismatch";
    case ErrorCode::MissingArtifact: return "MissingArtifact";
    case ErrorCode::TargetOutOfView: return "TargetOutOfView";
    case ErrorCode::DuplicateEpisode: return "DuplicateEpisode";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::DiscontinuousChain: return "DiscontinuousChain";
    case ErrorCode::UnknownFormat: return "UnknownFormat";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message, std::optional<std::int64_t> index)
    : std::runtime_error(std::string(to_string(code)) + ": " + message),
      code_(code),
      index_(index),
      detail_(message) {}

}  // namespace groundtrace

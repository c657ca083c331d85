#include "docs2synth/errors.hpp"

namespace docs2synth {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::EmptyDocument: return "EmptyDocument";
    case ErrorKind::EmptyCollection: return "EmptyCollection";
    case ErrorKind::FormatError: return "FormatError";
    case ErrorKind::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorKind::UndecodableImage: return "UndecodableImage";
    case ErrorKind::ProviderUnreachable: return "ProviderUnreachable";
    case ErrorKind::AuthError: return "AuthError";
    case ErrorKind::BudgetExceeded: return "BudgetExceeded";
    case ErrorKind::RequestRejected: return "RequestRejected";
    case ErrorKind::MalformedResponse: return "MalformedResponse";
    case ErrorKind::FixtureError: return "FixtureError";
    case ErrorKind::GenerationFailed: return "GenerationFailed";
    case ErrorKind::IllegalTransition: return "IllegalTransition";
    case ErrorKind::EditAnswerNotFound: return "EditAnswerNotFound";
    case ErrorKind::ModelError: return "ModelError";
    case ErrorKind::InsufficientData: return "InsufficientData";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::VersionMismatch: return "VersionMismatch";
    case ErrorKind::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorKind::UnmatchedTrace: return "UnmatchedTrace";
    case ErrorKind::QuestionSetMismatch: return "QuestionSetMismatch";
    case ErrorKind::ConfigParseError: return "ConfigParseError";
    case ErrorKind::ConfigValidationError: return "ConfigValidationError";
    case ErrorKind::LockHeld: return "LockHeld";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::StageFailed: return "StageFailed";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

}  // namespace docs2synth

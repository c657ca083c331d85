#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace docs2synth {

enum class ErrorKind {
  EmptyDocument,
  EmptyCollection,
  FormatError,
  UnsupportedFormat,
  UndecodableImage,
  ProviderUnreachable,
  AuthError,
  BudgetExceeded,
  RequestRejected,
  MalformedResponse,
  FixtureError,
  GenerationFailed,
  IllegalTransition,
  EditAnswerNotFound,
  ModelError,
  InsufficientData,
  NonFiniteLoss,
  VersionMismatch,
  CorruptCheckpoint,
  UnmatchedTrace,
  QuestionSetMismatch,
  ConfigParseError,
  ConfigValidationError,
  LockHeld,
  IoError,
  StageFailed,
};

std::string_view to_string(ErrorKind kind) noexcept;

// Base for every error this library throws. Callers that only need the
// category can catch Error and switch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

template <ErrorKind K>
class KindError : public Error {
 public:
  explicit KindError(const std::string& message) : Error(K, message) {}
};

using EmptyDocument = KindError<ErrorKind::EmptyDocument>;
using EmptyCollection = KindError<ErrorKind::EmptyCollection>;
using FormatError = KindError<ErrorKind::FormatError>;
using UnsupportedFormat = KindError<ErrorKind::UnsupportedFormat>;
using UndecodableImage = KindError<ErrorKind::UndecodableImage>;
using ProviderUnreachable = KindError<ErrorKind::ProviderUnreachable>;
using AuthError = KindError<ErrorKind::AuthError>;
using BudgetExceeded = KindError<ErrorKind::BudgetExceeded>;
using RequestRejected = KindError<ErrorKind::RequestRejected>;
using FixtureError = KindError<ErrorKind::FixtureError>;
using GenerationFailed = KindError<ErrorKind::GenerationFailed>;
using IllegalTransition = KindError<ErrorKind::IllegalTransition>;
using EditAnswerNotFound = KindError<ErrorKind::EditAnswerNotFound>;
using ModelError = KindError<ErrorKind::ModelError>;
using InsufficientData = KindError<ErrorKind::InsufficientData>;
using NonFiniteLoss = KindError<ErrorKind::NonFiniteLoss>;
using VersionMismatch = KindError<ErrorKind::VersionMismatch>;
using CorruptCheckpoint = KindError<ErrorKind::CorruptCheckpoint>;
using UnmatchedTrace = KindError<ErrorKind::UnmatchedTrace>;
using QuestionSetMismatch = KindError<ErrorKind::QuestionSetMismatch>;
using LockHeld = KindError<ErrorKind::LockHeld>;
using IoError = KindError<ErrorKind::IoError>;
using StageFailed = KindError<ErrorKind::StageFailed>;

// Carries every raw reply that failed to parse so callers can log them.
class MalformedResponse : public Error {
 public:
  MalformedResponse(const std::string& message, std::vector<std::string> raw_replies = {})
      : Error(ErrorKind::MalformedResponse, message), raw_replies_(std::move(raw_replies)) {}

  const std::vector<std::string>& raw_replies() const noexcept { return raw_replies_; }

 private:
  std::vector<std::string> raw_replies_;
};

class ConfigParseError : public Error {
 public:
  ConfigParseError(const std::string& message, int line, int column)
      : Error(ErrorKind::ConfigParseError, message), line_(line), column_(column) {}

  int line() const noexcept { return line_; }
  int column() const noexcept { return column_; }

 private:
  int line_;
  int column_;
};

class ConfigValidationError : public Error {
 public:
  ConfigValidationError(std::string key_path, const std::string& rule)
      : Error(ErrorKind::ConfigValidationError, key_path + ": " + rule),
        key_path_(std::move(key_path)) {}

  const std::string& key_path() const noexcept { return key_path_; }

 private:
  std::string key_path_;
};

}  // namespace docs2synth

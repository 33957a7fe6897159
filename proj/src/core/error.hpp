#pragma once

#include <stdexcept>
#include <string>

namespace ftc {

enum class ErrorCode {
  ParseError,
  ValidationError,
  InvalidConfig,
  ShapeMismatch,
  LengthMismatch,
  NonFiniteState,
  NonFiniteLoss,
  MissingModel,
  MissingArtifact,
  EmptyHistory,
  UnknownSubcommand,
  IoError,
  Internal,
};

inline const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::NonFiniteState: return "NonFiniteState";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::MissingModel: return "MissingModel";
    case ErrorCode::MissingArtifact: return "MissingArtifact";
    case ErrorCode::EmptyHistory: return "EmptyHistory";
    case ErrorCode::UnknownSubcommand: return "UnknownSubcommand";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::Internal: return "Internal";
  }
  return "Internal";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& msg)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + msg), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& msg) { throw Error(code, msg); }

inline void require(bool cond, ErrorCode code, const std::string& msg) {
  if (!cond) fail(code, msg);
}

}  // namespace ftc

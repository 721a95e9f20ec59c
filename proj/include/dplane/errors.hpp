#pragma once

#include <stdexcept>
#include <string>

namespace dplane {

// Exit codes used by the command-line front end.
enum class ExitCode : int {
  kOk = 0,
  kConfig = 2,
  kValidation = 3,
  kIo = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

// Bad argument to an operation (non-unit direction, negative step, ...).
class InputError : public Error {
 public:
  explicit InputError(const std::string& what) : Error(ExitCode::kConfig, what) {}
};

// Unsupported chart, malformed configuration, geometric assumption violated.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ExitCode::kConfig, what) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error(ExitCode::kIo, what) {}
};

// File missing, unreadable or unwritable.
class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ExitCode::kIo, what) {}
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what)
      : Error(ExitCode::kValidation, what) {}
};

}  // namespace dplane

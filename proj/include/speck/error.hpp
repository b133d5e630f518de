#pragma once

#include <stdexcept>
#include <string>

namespace speck {

// Process exit codes used by the command line tools.
enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,
  kExitData = 3,
  kExitNumeric = 4,
  kExitIo = 5,
};

class Error : public std::runtime_error {
 public:
  Error(const std::string& msg, int exit_code)
      : std::runtime_error(msg), exit_code_(exit_code) {}
  int exit_code() const { return exit_code_; }

 private:
  int exit_code_;
};

// Broad categories, one per exit code.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg, kExitConfig) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& msg) : Error(msg, kExitData) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& msg) : Error(msg, kExitNumeric) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error(msg, kExitIo) {}
};

// Specific conditions tests and callers dispatch on.
class ParseError : public ConfigError {
 public:
  ParseError(const std::string& msg, int line)
      : ConfigError("parse error at line " + std::to_string(line) + ": " + msg),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

class UnknownKeyError : public ConfigError {
 public:
  explicit UnknownKeyError(const std::string& key)
      : ConfigError("unknown config key: " + key) {}
};

class RangeError : public ConfigError {
 public:
  explicit RangeError(const std::string& msg) : ConfigError(msg) {}
};

class NotWavError : public DataError {
 public:
  explicit NotWavError(const std::string& msg) : DataError(msg) {}
};

class UnsupportedFormatError : public DataError {
 public:
  explicit UnsupportedFormatError(const std::string& msg) : DataError(msg) {}
};

class TruncatedError : public DataError {
 public:
  explicit TruncatedError(const std::string& msg) : DataError(msg) {}
};

class TooShortError : public DataError {
 public:
  explicit TooShortError(const std::string& msg) : DataError(msg) {}
};

// Shape or dimension disagreement between two artifacts.
class ShapeError : public DataError {
 public:
  explicit ShapeError(const std::string& msg) : DataError(msg) {}
};

class OutOfRangeError : public DataError {
 public:
  explicit OutOfRangeError(const std::string& msg) : DataError(msg) {}
};

class DegenerateInputError : public DataError {
 public:
  explicit DegenerateInputError(const std::string& msg) : DataError(msg) {}
};

class EmptyInputError : public DataError {
 public:
  explicit EmptyInputError(const std::string& msg) : DataError(msg) {}
};

class LabelMismatchError : public DataError {
 public:
  explicit LabelMismatchError(const std::string& msg) : DataError(msg) {}
};

class IncompatibleCheckpointsError : public DataError {
 public:
  explicit IncompatibleCheckpointsError(const std::string& msg)
      : DataError(msg) {}
};

class StepNotReachedError : public DataError {
 public:
  explicit StepNotReachedError(const std::string& msg) : DataError(msg) {}
};

class DegenerateTrialSetError : public DataError {
 public:
  explicit DegenerateTrialSetError(const std::string& msg) : DataError(msg) {}
};

class TooFewGroupsError : public DataError {
 public:
  explicit TooFewGroupsError(const std::string& msg) : DataError(msg) {}
};

class OracleMismatchError : public DataError {
 public:
  explicit OracleMismatchError(const std::string& msg) : DataError(msg) {}
};

}  // namespace speck

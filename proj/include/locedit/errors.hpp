#pragma once

#include <stdexcept>
#include <string>

namespace locedit {

// Exit codes shared by every CLI command.
enum class ExitCode : int {
  kOk = 0,
  kIo = 1,
  kInvalidInput = 2,
  kNumeric = 3,
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual ExitCode exit_code() const { return ExitCode::kInvalidInput; }
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const override { return ExitCode::kNumeric; }
};

class IoError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const override { return ExitCode::kIo; }
};

class RetrievalError : public Error {
 public:
  using Error::Error;
};

class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

}  // namespace locedit

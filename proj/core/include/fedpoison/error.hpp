#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fedpoison {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class OutOfVocabularyError : public Error {
 public:
  using Error::Error;
};

class EmptyInputError : public Error {
 public:
  using Error::Error;
};

class InvalidLabelError : public Error {
 public:
  using Error::Error;
};

class EmptyCorpusError : public Error {
 public:
  using Error::Error;
};

class InfeasiblePartitionError : public Error {
 public:
  using Error::Error;
};

class EmptyEvaluationError : public Error {
 public:
  using Error::Error;
};

// Fixed-frequency sampling can only place one adversary per round.
class UnsupportedScheduleError : public Error {
 public:
  using Error::Error;
};

class AggregationEmptyError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration of any module. `line` is 0 when the error does not
// come from a config file.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message, std::size_t line = 0)
      : Error(line == 0 ? message : "line " + std::to_string(line) + ": " + message),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class NumericError : public Error {
 public:
  NumericError(const std::string& message, std::size_t round)
      : Error("round " + std::to_string(round) + ": " + message), round_(round) {}

  std::size_t round() const noexcept { return round_; }

 private:
  std::size_t round_;
};

}  // namespace fedpoison

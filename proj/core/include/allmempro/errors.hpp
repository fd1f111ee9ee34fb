#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace allmempro {

/// Base class for every simulation error.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// machine
class OverlapError : public Error {
 public:
  using Error::Error;
};

class DuplicateNameError : public Error {
 public:
  using Error::Error;
};

class UnknownModuleError : public Error {
 public:
  using Error::Error;
};

// ept
class WindowAlreadyOpenError : public Error {
 public:
  using Error::Error;
};

class StaleTokenError : public Error {
 public:
  using Error::Error;
};

// policy
class UntrackedOwnerError : public Error {
 public:
  using Error::Error;
};

class UnknownAllocationError : public Error {
 public:
  using Error::Error;
};

class NotOwnerError : public Error {
 public:
  using Error::Error;
};

class DuplicateRuleError : public Error {
 public:
  using Error::Error;
};

class InvalidRuleError : public Error {
 public:
  using Error::Error;
};

// vmm
class WidthError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Sub-operation failure tagged with the ordinal of the event that caused it.
class EventError : public Error {
 public:
  EventError(std::size_t ordinal, const std::string& message)
      : Error("event #" + std::to_string(ordinal) + ": " + message),
        ordinal_(ordinal) {}

  std::size_t ordinal() const { return ordinal_; }

 private:
  std::size_t ordinal_ = 0;
};

// scenario
class ParseError : public Error {
 public:
  ParseError(int line, int column, const std::string& message)
      : Error("line " + std::to_string(line) + ", column " +
              std::to_string(column) + ": " + message),
        line_(line),
        column_(column),
        message_(message) {}

  int line() const { return line_; }
  int column() const { return column_; }
  const std::string& message() const { return message_; }

 private:
  int line_ = 0;
  int column_ = 0;
  std::string message_;
};

class RuntimeError : public Error {
 public:
  RuntimeError(int line, const std::string& underlying)
      : Error("line " + std::to_string(line) + ": " + underlying),
        line_(line) {}

  int line() const { return line_; }

 private:
  int line_ = 0;
};

}  // namespace allmempro

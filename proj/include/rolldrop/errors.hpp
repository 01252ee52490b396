#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rolldrop {

// Caller broke a documented precondition (shape mismatch, missing tape, ...).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Invalid configuration value, unknown key, or out-of-range probability.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Binary payload is truncated, has the wrong magic, or an unsupported version.
class CorruptPayload : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : std::runtime_error(source + ":" + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

}  // namespace rolldrop

#pragma once

#include <stdexcept>
#include <string>

namespace posthoc {

// Raised when a caller breaks a documented precondition (shape mismatch,
// out-of-range index, invalid configuration value).
class ContractViolation : public std::logic_error {
 public:
  explicit ContractViolation(const std::string& what) : std::logic_error(what) {}
};

// Raised when an iterative procedure produces a non-finite loss or gradient.
class DivergenceError : public std::runtime_error {
 public:
  explicit DivergenceError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed input file. `where` carries a line number or byte offset.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& source, const std::string& where, const std::string& what)
      : std::runtime_error(source + ":" + where + ": " + what) {}
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractViolation(message);
}

}  // namespace posthoc

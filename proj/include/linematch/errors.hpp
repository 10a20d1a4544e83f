#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace linematch {

/// Input violates a documented precondition (bad hyperparameter, non-finite value, ...).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Shapes of two operands do not agree, or an input is below a minimum size.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed file content. `line()` is 1-based, 0 when unknown.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(line ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Loss or parameters became non-finite.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Soft warnings raised by operations that recover instead of throwing.
struct Diagnostics {
  std::vector<std::string> warnings;
  void warn(std::string msg) { warnings.push_back(std::move(msg)); }
  bool empty() const { return warnings.empty(); }
};

inline void warn(Diagnostics* diag, std::string msg) {
  if (diag) diag->warn(std::move(msg));
}

}  // namespace linematch

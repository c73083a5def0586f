#pragma once

#include <stdexcept>
#include <string>

namespace loralab {

/// Violated precondition or call contract.
struct ContractViolation : std::logic_error {
  using std::logic_error::logic_error;
};

/// Numerical failure: non-convergence or a non-finite intermediate.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Invalid experiment configuration. `field` names the offending entry.
struct ConfigError : std::runtime_error {
  std::string field;
  ConfigError(std::string field_, const std::string& msg)
      : std::runtime_error(field_ + ": " + msg), field(std::move(field_)) {}
};

/// Malformed input file. `line` is 1-based, 0 if not line-specific.
struct ParseError : std::runtime_error {
  long line;
  ParseError(const std::string& msg, long line_ = 0)
      : std::runtime_error(line_ > 0 ? msg + " (line " + std::to_string(line_) + ")" : msg),
        line(line_) {}
};

/// Formats a double with 17 significant digits (lossless reload).
std::string format_real(double v);

}  // namespace loralab

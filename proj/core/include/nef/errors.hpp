#pragma once

#include <stdexcept>
#include <string>

namespace nef {

// Error taxonomy. The CLI maps these onto exit codes: config/data problems
// exit 2, numeric failures exit 3 (flag misuse is handled by the parser, 1).
struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Shapes that cannot be combined: mismatched matmul operands, ragged rows...
struct DimensionError : Error {
  explicit DimensionError(const std::string& what) : Error(what) {}
};

// Invalid configuration values or combinations (k < 1, alpha < 0, K > width).
struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(what) {}
};

// Malformed or inconsistent input data: bad magic, truncated payloads,
// zero feature rows, mismatched mask counts, isolated graph vertices.
struct DataError : Error {
  explicit DataError(const std::string& what) : Error(what) {}
};

// Numerical breakdown: non-finite values, no convergence, degenerate
// normalization denominators.
struct NumericError : Error {
  explicit NumericError(const std::string& what) : Error(what) {}
};

}  // namespace nef

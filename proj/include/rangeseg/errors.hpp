#ifndef RANGESEG_ERRORS_HPP
#define RANGESEG_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace rangeseg {

// Base for everything thrown by the library. The CLI maps these onto its
// exit-code contract (data/config/shape/numeric errors all exit with 2).
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Unreadable / unwritable paths.
class IoError : public Error {
public:
  explicit IoError(const std::string& msg) : Error(msg) {}
};

// Malformed file contents: bad record sizes, unparsable tokens, unknown
// label ids, mismatched pairings.
class DataError : public Error {
public:
  explicit DataError(const std::string& msg) : Error(msg) {}
};

// Tensor / image dimension mismatches.
class ShapeError : public Error {
public:
  explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Invalid configuration values (degenerate projection, missing files).
class ConfigError : public Error {
public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Non-finite values where finite math is required.
class NumericError : public Error {
public:
  explicit NumericError(const std::string& msg) : Error(msg) {}
};

} // namespace rangeseg

#endif // RANGESEG_ERRORS_HPP

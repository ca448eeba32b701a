#pragma once

#include <stdexcept>
#include <string>

namespace simplexlm {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not satisfy an operation's contract.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value or malformed config file.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Bad input data: out-of-range ids, corrupted files, vocabulary mismatches.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values where finite ones are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace simplexlm

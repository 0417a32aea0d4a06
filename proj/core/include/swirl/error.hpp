#pragma once

#include <stdexcept>
#include <string>

namespace swirl {

// Error categories map onto the CLI exit codes (2 config, 3 data, 4 numerical).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace swirl

#pragma once

#include <stdexcept>
#include <string>

namespace ddmnet {

// Error families. The CLI maps them onto exit codes (config 1, data 2,
// numeric 3); everything else is a programming/contract error.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
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

class NumericError : public Error {
 public:
  using Error::Error;
};

class ContractError : public Error {
 public:
  using Error::Error;
};

}  // namespace ddmnet

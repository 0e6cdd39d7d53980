#pragma once

#include <stdexcept>
#include <string>

namespace pamda {

// Error categories map onto CLI exit codes: config/schema -> 1,
// numeric fault -> 2, I/O -> 3. Contract and state violations are
// programming errors and surface as 1 as well.

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

class ContractViolation : public Error {
 public:
  using Error::Error;
};

class StateError : public Error {
 public:
  using Error::Error;
};

class NumericFault : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace pamda

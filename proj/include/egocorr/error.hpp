#pragma once

#include <stdexcept>
#include <string>

namespace egocorr {

// Base of everything the library throws on bad input data.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Missing, truncated or inconsistent files and data.
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace egocorr

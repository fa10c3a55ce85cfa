#pragma once

#include <stdexcept>
#include <string>

namespace annorefine {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration or parameters. The CLI maps these to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Problems with input data. The CLI maps these to exit code 3.
class DataError : public Error {
 public:
  using Error::Error;
};

class OutOfRangeError : public DataError {
 public:
  using DataError::DataError;
};

class AlignmentError : public DataError {
 public:
  using DataError::DataError;
};

class DegenerateTrackError : public DataError {
 public:
  using DataError::DataError;
};

class CalibrationMissingError : public DataError {
 public:
  using DataError::DataError;
};

class InsufficientDataError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace annorefine

#pragma once

#include <stdexcept>
#include <string>

namespace hialign {

// Base for every error raised by the library. Callers that only care about
// "did the experiment fail" catch this; tests pin the concrete subclass.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// Zero (or near-zero) vector where a direction was required.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf showed up in a computation that started from finite inputs.
class NumericError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace hialign

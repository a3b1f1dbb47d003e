#pragma once

#include <stdexcept>
#include <string>

namespace vfsynth {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite arithmetic (overflow in the Arrhenius term, NaN inputs, ...).
class NumericDomainError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Argument outside its mathematical domain (eps not in (0,1), h < 0, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

class BasisError : public Error {
 public:
  using Error::Error;
};

/// Malformed files, I/O failures and schema violations.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace vfsynth

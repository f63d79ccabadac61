#pragma once

#include <stdexcept>
#include <string>

namespace raest {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input: configs, profiles, sites, files.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// An exhaustive computation would exceed its configured work budget.
class ScaleGuardError : public Error {
 public:
  using Error::Error;
};

}  // namespace raest

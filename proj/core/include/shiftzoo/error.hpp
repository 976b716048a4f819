#pragma once

#include <stdexcept>
#include <string>

namespace shiftzoo {

/// Runtime failure: I/O, numerical breakdown, diverged training.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input: malformed files, inconsistent manifests, invalid configuration.
/// The CLI maps this to exit code 2.
class ValidationError : public Error {
 public:
  using Error::Error;
};

}  // namespace shiftzoo

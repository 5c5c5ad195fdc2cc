#pragma once

#include <stdexcept>
#include <string>

namespace rashomon {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor/graph shape contract violations.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid or unparsable configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A pipeline stage was invoked before the stages it reads from.
class DependencyError : public Error {
 public:
  using Error::Error;
};

}  // namespace rashomon

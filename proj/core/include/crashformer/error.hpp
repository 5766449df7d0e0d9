#pragma once

#include <stdexcept>
#include <string>

namespace crashformer {

/// Bad input: malformed files, out-of-range arguments, schema violations.
/// The CLI maps this to exit code 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Failure while doing otherwise valid work (I/O, network, numerical blow-up).
/// The CLI maps this to exit code 2.
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MissingTile : public RuntimeFailure {
 public:
  using RuntimeFailure::RuntimeFailure;
};

}  // namespace crashformer

#pragma once

#include <stdexcept>
#include <string>

namespace masattr {

// Configuration or query validation failure (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A coalition evaluation failed: evaluator error, judge error, non-executable
// coalition under skip_with_error (CLI exit code 3).
class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class StorageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace masattr

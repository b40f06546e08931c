#ifndef MPP_ERRORS_H_
#define MPP_ERRORS_H_

#include <stdexcept>
#include <string>
#include <utility>

namespace mpp {

// Shape or layer-chain inconsistency, unknown keys, missing stages.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller-supplied data violates an operation's precondition.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// NaN/Inf, degenerate EM, and similar numerical failures.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or truncated model / container file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A pipeline artifact is missing; `stage` names the step that produces it.
class StageError : public ConfigError {
 public:
  StageError(std::string stage, const std::string& what)
      : ConfigError(what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

}  // namespace mpp

#endif  // MPP_ERRORS_H_

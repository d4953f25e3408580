#pragma once

#include <stdexcept>
#include <string>

namespace referee {

// Error taxonomy used across the toolkit. Validation errors are caused by
// bad user input (files, flags, config values) and map to CLI exit code 1;
// runtime errors are failures during otherwise valid work (exit code 2).
class Error : public std::runtime_error {
 public:
  enum class Kind { validation, runtime };

  Error(Kind kind, std::string message)
      : std::runtime_error(std::move(message)), kind_(kind) {}

  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

[[noreturn]] inline void throw_validation(const std::string& msg) {
  throw Error(Error::Kind::validation, msg);
}

[[noreturn]] inline void throw_runtime(const std::string& msg) {
  throw Error(Error::Kind::runtime, msg);
}

}  // namespace referee

#pragma once

#include <stdexcept>
#include <string>

namespace zeno {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Damping gap fell to (or below) the gap floor somewhere in the Brillouin zone.
class ZeroGap : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration. `line` is 0 when the error is not tied to a file position.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what, std::string key = {}, int line = 0)
      : Error(format(what, key, line)), key_(std::move(key)), line_(line) {}

  const std::string& key() const { return key_; }
  int line() const { return line_; }

 private:
  static std::string format(const std::string& what, const std::string& key, int line) {
    std::string out;
    if (line > 0) out += "line " + std::to_string(line) + ": ";
    if (!key.empty()) out += "'" + key + "': ";
    return out + what;
  }

  std::string key_;
  int line_;
};

class StepFailure : public Error {
 public:
  StepFailure(const std::string& what, double stiffness_bound)
      : Error(what + " (stiffness bound " + std::to_string(stiffness_bound) + ")"),
        stiffness_bound_(stiffness_bound) {}

  double stiffness_bound() const { return stiffness_bound_; }

 private:
  double stiffness_bound_;
};

class EmptyState : public Error {
 public:
  using Error::Error;
};

class NoCollision : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class UnknownPreset : public Error {
 public:
  using Error::Error;
};

}  // namespace zeno

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace poseflow {

/// Base error for all poseflow failures. `what()` carries the full message.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  ConfigError(const std::string& pointer, const std::string& msg)
      : Error(pointer + ": " + msg), pointer_(pointer) {}
  const std::string& pointer() const { return pointer_; }

 private:
  std::string pointer_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace poseflow

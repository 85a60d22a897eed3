// errors.hpp -- exception types shared across the library.
#pragma once

#include <stdexcept>
#include <string>

namespace selfpu {

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

struct RangeError : std::runtime_error {
  explicit RangeError(const std::string& what) : std::runtime_error(what) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

struct BatchCompositionError : std::runtime_error {
  explicit BatchCompositionError(const std::string& what) : std::runtime_error(what) {}
};

struct PartitionError : std::runtime_error {
  explicit PartitionError(const std::string& what) : std::runtime_error(what) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

struct SchedulingError : std::runtime_error {
  explicit SchedulingError(const std::string& what) : std::runtime_error(what) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace selfpu

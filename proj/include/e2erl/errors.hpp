#pragma once

#include <stdexcept>
#include <string>

namespace e2erl {

/// Dimension mismatch between a network, a state or an input.
class ShapeError : public std::invalid_argument {
 public:
  explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

/// Stored data disagrees with what it claims to be (trace replay, checksums).
class IntegrityError : public std::runtime_error {
 public:
  explicit IntegrityError(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid or inconsistent configuration. Maps to CLI exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

/// Operation called in the wrong lifecycle phase (e.g. stepping a finished episode).
class LifecycleError : public std::logic_error {
 public:
  explicit LifecycleError(const std::string& what) : std::logic_error(what) {}
};

/// Non-finite values or ill-conditioned systems.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// An analysis was asked to summarise nothing.
class NoDataError : public std::runtime_error {
 public:
  explicit NoDataError(const std::string& what) : std::runtime_error(what) {}
};

/// A checkpoint that cannot be used with the requested task.
class CheckpointError : public std::runtime_error {
 public:
  explicit CheckpointError(const std::string& what) : std::runtime_error(what) {}
};

std::string format_double(double value);

}  // namespace e2erl

#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace kdvhl {

/// Base class for every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A documented precondition of an operation was violated by the caller.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Requested derivative / weight order outside the supported range.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Time stepping failed: Picard divergence, singular boundary rows, NaN.
class SolverError : public Error {
 public:
  using Error::Error;
};

/// Experiment configuration could not be parsed or validated.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what) {}
  ConfigError(std::string key, const std::string& what)
      : Error("config key '" + key + "': " + what), key_(std::move(key)) {}

  /// The offending key, empty when the error is not tied to one.
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw PreconditionError(what);
}

}  // namespace kdvhl

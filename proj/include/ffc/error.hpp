#pragma once

#include <stdexcept>
#include <string>

namespace ffc {

/// Base class for every error raised by the toolkit. The exit code is what the
/// command-line harness reports when the error escapes a subcommand.
class Error : public std::runtime_error {
 public:
  Error(const std::string& what, int exit_code) : std::runtime_error(what), exit_code_(exit_code) {}
  int exit_code() const noexcept { return exit_code_; }

 private:
  int exit_code_;
};

/// Invalid arguments, unknown names, inconsistent configuration.
class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(what, 2) {}
};

/// Malformed or truncated files, shape mismatches between stored artifacts.
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(what, 3) {}
};

/// Non-finite values, divergence, symmetry violations in inverse transforms.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(what, 4) {}
};

}  // namespace ffc

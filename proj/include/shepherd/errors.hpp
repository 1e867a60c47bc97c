#pragma once

#include <stdexcept>
#include <string>

namespace shepherd {

// Error taxonomy shared by the library and the CLI. Each class maps to one
// process exit code (see tools/shepherd_cli.cpp).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Rejection sampling or scenario construction could not find a feasible
// placement within the retry budget.
class InfeasibleError : public std::runtime_error {
 public:
  explicit InfeasibleError(const std::string& what) : std::runtime_error(what) {}
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite values where finiteness is a contract (losses, states).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace shepherd

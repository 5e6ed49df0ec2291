#pragma once

#include <stdexcept>
#include <string>

namespace egfn {

// Dimension mismatches, invalid hyperparameters, bad layouts.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// API called outside its contract (e.g. actions on a terminal state).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed trajectories, edges or rewards supplied by the caller.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Non-finite gradients or losses during optimisation.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Exhaustive enumeration requested beyond the configured cap.
class OracleUnavailable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void log_warning(const std::string& message);

}  // namespace egfn

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sake {

// Caller broke a documented precondition (shape mismatch, bad argument).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A computation produced NaN/Inf. Carries the name of the producing op.
class NumericError : public std::runtime_error {
 public:
  NumericError(std::string op, const std::string& what)
      : std::runtime_error(what), op_(std::move(op)) {}
  const std::string& op() const { return op_; }

 private:
  std::string op_;
};

class TrainingDivergence : public NumericError {
 public:
  using NumericError::NumericError;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class LookupError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// Class sets of a split overlap where they must be disjoint.
class SplitViolation : public std::runtime_error {
 public:
  SplitViolation(int class_id, const std::string& what)
      : std::runtime_error(what), class_id_(class_id) {}
  int class_id() const { return class_id_; }

 private:
  int class_id_;
};

// Evaluation touched a class outside the target set.
class ZeroShotViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A run configuration is malformed: unknown key, wrong type, bad value.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace sake

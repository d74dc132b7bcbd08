#pragma once

#include <stdexcept>
#include <string>

namespace densematch {

// Rejection sampling ran out of attempts (e.g. an unsatisfiable overlap
// constraint in the view-pair sampler).
class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Structurally valid input that leaves nothing to compute (empty matched
// set, zero overlap cells).
class DegenerateInputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite value produced where the contract requires finite arithmetic.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File could not be opened, read, or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed text input; message carries a 1-based line number.
class ParseError : public std::runtime_error {
 public:
  ParseError(int line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what),
        line_(line) {}

  int line() const { return line_; }

 private:
  int line_;
};

}  // namespace densematch

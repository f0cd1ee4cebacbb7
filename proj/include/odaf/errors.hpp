#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace odaf {

/// A query referenced a state outside the dataset's state support.
class SupportError : public std::runtime_error {
 public:
  SupportError(const std::string& what, int state) : std::runtime_error(what), state_(state) {}
  int state() const { return state_; }

 private:
  int state_;
};

/// Malformed input file. `line()` is 1-based; 0 when the problem is not tied to a line.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Fixed-point iteration hit max_iter. Carries the sup-norm delta trace.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, std::vector<double> trace)
      : std::runtime_error(what), trace_(std::move(trace)) {}
  const std::vector<double>& trace() const { return trace_; }

 private:
  std::vector<double> trace_;
};

}  // namespace odaf

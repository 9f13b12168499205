#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace betamix {

// Argument outside the mathematical domain of a function.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Malformed or unusable input data (files, labels, option combinations).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An iterative solver failed to converge. Carries the iterate history so the
// caller can report what happened.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what, std::vector<double> trace = {})
      : std::runtime_error(what), trace_(std::move(trace)) {}

  const std::vector<double>& trace() const noexcept { return trace_; }

 private:
  std::vector<double> trace_;
};

}  // namespace betamix

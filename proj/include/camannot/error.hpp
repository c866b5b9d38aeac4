#pragma once

#include <stdexcept>
#include <string>

namespace camannot {

/// Operational failure (bad input data, I/O, backend trouble).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid invocation: missing or conflicting options.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace camannot

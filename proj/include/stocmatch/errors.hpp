#pragma once

#include <stdexcept>
#include <string>

namespace stocmatch {

// Bad user input: malformed documents, out-of-range fields, inconsistent
// seed orders or distributions. Messages carry the offending field path.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A request that would enumerate more failure configurations (or candidate
// subsets) than the configured guard allows.
class EnumerationLimitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Internal solver failure. The problem LPs are feasible and bounded by
// construction, so infeasible/unbounded statuses and pivot-limit blowups
// signal a bug rather than a bad input.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Every cluster's probability mass is already explained by its own seed;
// there is nothing left to split.
class NoSplittableClusterError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace stocmatch

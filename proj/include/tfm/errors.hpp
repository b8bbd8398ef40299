#pragma once

#include <stdexcept>
#include <string>

namespace tfm {

// Bad data or arguments: unreadable files, parse failures, dimension
// mismatches, out-of-range parameters.
class input_error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Numerical failures: degenerate operators, eigen-solver breakdown.
class numeric_error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Configuration that leaves an operation with nothing to work on,
// e.g. empty tail partitions or an empty threshold candidate grid.
class config_error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace tfm

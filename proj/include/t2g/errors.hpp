#pragma once

#include <stdexcept>

namespace t2g {

// Bad inputs or configuration: malformed schema, header mismatch, shape errors.
// The CLI maps this to exit code 2.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numeric breakdown at runtime: non-finite loss, factorization failure.
// The CLI maps this to exit code 3.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace t2g

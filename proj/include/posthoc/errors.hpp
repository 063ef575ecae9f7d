#pragma once

#include <stdexcept>

namespace posthoc {

// Malformed or out-of-range input (CLI exit code 2, HTTP 400).
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Well-formed request that the library declines to compute, such as an
// exponential enumeration above its cap (CLI exit code 1).
class RefusedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace posthoc

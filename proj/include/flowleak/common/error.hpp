#pragma once

#include <stdexcept>
#include <string>

namespace flowleak {

// Error taxonomy. Every failure in the library surfaces as one of these with a
// message naming the operation and the offending values; nothing aborts.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or dimensionality mismatch in a tensor operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid argument value (out-of-range scalar, bad label, degenerate input).
class ValueError : public Error {
 public:
  using Error::Error;
};

// Misuse of the gradient machinery (non-scalar output, tensor not on a graph).
class GradError : public Error {
 public:
  using Error::Error;
};

// Malformed file or config content; messages carry byte offsets or key names.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Filesystem-level failure (missing file, unwritable directory).
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace flowleak

#pragma once

#include <stdexcept>

namespace has8 {

// Incompatible extents (broadcasting, matmul inner dims, fusion, ...).
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Out-of-domain arguments: pixels outside [0,1], bad labels, even Fourier
// term counts and the like.
class ValueError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Misuse of the tape: non-scalar loss, consumed tape, bad custom backward.
class AutogradError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Malformed or truncated input files.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// NaN/Inf detected in a forward value, gradient or loss.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace has8

#pragma once

#include <stdexcept>
#include <string>

namespace pairinfer {

// Incompatible tensor shapes or axis arguments.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// NaN/Inf produced by a forward op, zero-norm cosine input, and similar.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed documents, configs, checkpoints or submission files.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace pairinfer

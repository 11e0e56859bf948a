#pragma once

#include <stdexcept>

namespace pls {

// File or stream level failure (open, read, write).
struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input data (pool files, datasets, model files, reports).
struct parse_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A retry or node budget was exhausted.
struct resource_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Inconsistent or incomplete run configuration.
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace pls

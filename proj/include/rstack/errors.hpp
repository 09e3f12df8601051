#pragma once

#include <stdexcept>
#include <string>

namespace rstack {

// Shape disagreement between operands of a primitive or layer.
struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// API misuse: non-scalar loss, missing gradient, mismatched lengths.
struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Out-of-range lookup (embedding rows, slices).
struct IndexError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values where finite ones are required.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Unreadable or malformed input files / program text.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace rstack

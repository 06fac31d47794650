#pragma once

#include <stdexcept>
#include <string>

namespace textgnn {

// Malformed or out-of-contract input data (bad TSV row, unknown label, ...).
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor shape disagreement.
struct ShapeError : std::invalid_argument {
  explicit ShapeError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Softmax/aggregation asked to normalize over an empty candidate set.
struct MaskError : std::invalid_argument {
  explicit MaskError(const std::string& msg) : std::invalid_argument(msg) {}
};

// API misuse that is a programming error, not a data problem.
struct ContractError : std::logic_error {
  explicit ContractError(const std::string& msg) : std::logic_error(msg) {}
};

// Numeric failure at runtime (NaN loss, diverging gradients).
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace textgnn

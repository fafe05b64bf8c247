#pragma once

#include <stdexcept>
#include <string>

namespace emucal {

// Mismatched or empty array/matrix dimensions.
struct DimensionError : std::invalid_argument {
  explicit DimensionError(const std::string& what) : std::invalid_argument(what) {}
};

// Degenerate or out-of-domain numeric input (zero variance, nonpositive sigma, ...).
struct ValueError : std::invalid_argument {
  explicit ValueError(const std::string& what) : std::invalid_argument(what) {}
};

// Operation not defined for the given input kind (e.g. LHC on a Gaussian prior).
struct UnsupportedError : std::invalid_argument {
  explicit UnsupportedError(const std::string& what) : std::invalid_argument(what) {}
};

// Runtime failure inside a sampling run (constrained-draw exhaustion, degenerate live set).
struct SamplingError : std::runtime_error {
  explicit SamplingError(const std::string& what) : std::runtime_error(what) {}
};

// Invalid or inconsistent experiment configuration.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace emucal

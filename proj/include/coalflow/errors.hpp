#pragma once

#include <stdexcept>
#include <string>

namespace coalflow {

// Invalid run/simulation configuration (violated constraint is named in the message).
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// A requested block or atom lies outside the observation window.
struct WindowError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// A combinatorial operation would exceed its enumeration guard.
struct SizeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Numerical consistency failure (quadrature blow-up, negative variance, ...).
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Series truncation cannot reach the requested tolerance.
struct TruncationError : NumericError {
    using NumericError::NumericError;
};

}  // namespace coalflow

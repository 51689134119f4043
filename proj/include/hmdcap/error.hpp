#pragma once

#include <stdexcept>
#include <string>

namespace hmdcap {

/// Inputs whose sizes disagree with the model they are combined with.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed, missing or unreadable data (files, manifests, observations).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Degenerate geometry, failed fits, diverging training.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace hmdcap

#pragma once

#include <stdexcept>
#include <string>

namespace sizemorph {

// Non-positive or otherwise invalid grid dimensions.
struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Operands whose shapes do not agree.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ArgumentError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Raised by dataset/checkpoint loaders; the message names the offending item.
struct LoadError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A loss or gradient went NaN/Inf during training.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace sizemorph

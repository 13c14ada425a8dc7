#pragma once

#include <stdexcept>
#include <string>

namespace advml {

// Error taxonomy mirrored by the CLI exit codes:
// ConfigError/ShapeError -> 2, IoError -> 3, NumericError -> 4.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid user-facing parameter (epochs=0, dropout rate >= 1, lo > hi, ...).
struct ConfigError : Error {
    using Error::Error;
};

// Non-conformable tensor shapes or a mismatched layer chain.
struct ShapeError : Error {
    using Error::Error;
};

// Filesystem / decode / format failures.
struct IoError : Error {
    using Error::Error;
};

// NaN or Inf detected in a value that must stay finite.
struct NumericError : Error {
    using Error::Error;
};

} // namespace advml

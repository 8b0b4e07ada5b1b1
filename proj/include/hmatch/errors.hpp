#pragma once

#include <stdexcept>
#include <string>

namespace hmatch {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite box coordinates or otherwise malformed geometric input.
struct InvalidGeometryError : Error {
    using Error::Error;
};

// Zero-area union / enclosing box where a ratio is required.
struct DegenerateGeometryError : Error {
    using Error::Error;
};

// Cost matrix containing NaN/inf entries or with empty dimensions.
struct InvalidCostError : Error {
    using Error::Error;
};

// Fewer queries than targets to assign.
struct CapacityError : Error {
    using Error::Error;
};

// Brute-force oracle asked to enumerate beyond its dimension cap.
struct OracleTooLargeError : Error {
    using Error::Error;
};

// Invalid or inconsistent configuration values.
struct ConfigError : Error {
    using Error::Error;
};

// Assignment or view referencing out-of-range indices.
struct IndexError : Error {
    using Error::Error;
};

// Training produced a non-finite loss.
struct DivergenceError : Error {
    using Error::Error;
};

}  // namespace hmatch

#pragma once

#include <stdexcept>
#include <string>

namespace ctxot {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape or axis mismatch between operands.
struct DimensionError : Error {
    using Error::Error;
};

// Invalid argument value (out of range, malformed, wrong enum).
struct ArgumentError : Error {
    using Error::Error;
};

// Input exceeds a hard implementation limit.
struct CapacityError : Error {
    using Error::Error;
};

// Malformed, truncated, or non-finite serialized payload.
struct FormatError : Error {
    using Error::Error;
};

// Filesystem failure.
struct IoError : Error {
    using Error::Error;
};

// Caller-provided data violates a documented precondition.
struct InputError : Error {
    using Error::Error;
};

}  // namespace ctxot

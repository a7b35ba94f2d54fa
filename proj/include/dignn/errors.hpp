#pragma once

#include <stdexcept>
#include <string>

namespace dignn {

/// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Mismatched matrix/vector dimensions or misaligned arc arrays.
struct ShapeError : Error {
    using Error::Error;
};

/// Invalid caller-supplied values: out-of-range indices, non-positive
/// weights, bad fractions, unknown configuration keys.
struct InvalidArgument : Error {
    using Error::Error;
};

/// A mathematical precondition does not hold for the given instance:
/// zero degree, isolated node, bipartite/disconnected graph, dense cap
/// exceeded, empty mask or split, singular system.
struct DomainError : Error {
    using Error::Error;
};

/// Non-finite values produced or encountered mid-computation.
struct NumericError : Error {
    using Error::Error;
};

/// Malformed input file; message carries the line number.
struct ParseError : Error {
    using Error::Error;
};

/// Filesystem failures (missing or unwritable files).
struct IoError : Error {
    using Error::Error;
};

}  // namespace dignn

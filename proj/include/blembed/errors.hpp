#pragma once

#include <stdexcept>
#include <string>

namespace blembed {

/// Normalizer of a tilted Gaussian could not be established (overflow, or
/// the quadrature did not settle inside the search window).
class divergent_normalizer : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An operation that requires a convex potential received a nonconvex one.
class nonconvex_potential : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A slope map violates its declared lower/upper derivative bounds.
class slope_bound_violation : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An ensemble was paired with a transport map it was not simulated from.
class provenance_mismatch : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed or invalid experiment configuration.
class config_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace blembed

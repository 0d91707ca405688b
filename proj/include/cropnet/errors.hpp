#pragma once

#include <stdexcept>
#include <string>

namespace cropnet {

// Base for all library errors so callers can catch one type at the CLI boundary.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Input data violates a structural invariant (shapes, ranges, ordering).
class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& msg) : Error(msg) {}
};

// A sample could not be composited because too many time bins are empty.
class RejectionError : public Error {
public:
    RejectionError(const std::string& msg, double empty_fraction)
        : Error(msg), empty_fraction(empty_fraction) {}
    double empty_fraction;
};

// Fewer observations than a fit requires.
class InsufficientDataError : public Error {
public:
    explicit InsufficientDataError(const std::string& msg) : Error(msg) {}
};

// Rank-deficient least-squares system.
class SingularFitError : public Error {
public:
    explicit SingularFitError(const std::string& msg) : Error(msg) {}
};

// Checkpoint file unreadable: bad magic/version, truncation, or shape mismatch.
class CheckpointError : public Error {
public:
    explicit CheckpointError(const std::string& msg) : Error(msg) {}
};

// Experiment configuration file or flag set is invalid.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

}  // namespace cropnet

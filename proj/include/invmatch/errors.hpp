#pragma once

#include <stdexcept>
#include <string>

namespace invmatch {

// Bad user-supplied configuration or precondition violation (CLI exit 2).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numeric breakdown: non-finite samples, failed convergence thresholds.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Rank-deficient or singular linear system.
struct SingularError : std::runtime_error {
    explicit SingularError(const std::string& msg) : std::runtime_error(msg) {}
};

// Structural model violates its own invariants (cycles, inconsistent sets).
struct ModelError : std::runtime_error {
    explicit ModelError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace invmatch

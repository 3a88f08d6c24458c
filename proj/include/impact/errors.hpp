#pragma once

#include <stdexcept>
#include <string>

namespace impact {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape / conformability violations (matrix dims, vector lengths, layer chaining).
struct DimensionError : Error {
    explicit DimensionError(const std::string& msg) : Error(msg) {}
};

// Input outside the mathematical domain of an operation: division by a
// (near-)zero entry, asymmetric input to the symmetric eigensolver,
// degenerate importance or covariance.
struct DomainError : Error {
    explicit DomainError(const std::string& msg) : Error(msg) {}
};

// Iterative method failed to reach its tolerance.
struct ConvergenceError : Error {
    explicit ConvergenceError(const std::string& msg) : Error(msg) {}
};

// Requested rank outside [1, admissible maximum].
struct RankError : Error {
    explicit RankError(const std::string& msg) : Error(msg) {}
};

// Rejected sample or statistics: non-finite entries, too few samples.
struct SampleError : Error {
    explicit SampleError(const std::string& msg) : Error(msg) {}
};

// Unknown tags, inconsistent options, missing layers.
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Malformed file content (with location context where available).
struct ParseError : Error {
    explicit ParseError(const std::string& msg) : Error(msg) {}
};

// File declares a format version this build does not understand.
struct VersionError : Error {
    explicit VersionError(const std::string& msg) : Error(msg) {}
};

// File content parses but violates a data invariant (non-finite value,
// negative squared gradient, asymmetric covariance beyond tolerance).
struct DataError : Error {
    explicit DataError(const std::string& msg) : Error(msg) {}
};

// Filesystem failures.
struct IoError : Error {
    explicit IoError(const std::string& msg) : Error(msg) {}
};

// Training loss became non-finite.
struct TrainingDivergenceError : Error {
    explicit TrainingDivergenceError(const std::string& msg) : Error(msg) {}
};

}  // namespace impact

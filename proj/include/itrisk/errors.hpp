#pragma once

#include <stdexcept>
#include <string>

namespace itrisk {

// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A scalar or structural parameter is outside its admissible range.
struct InvalidParameter : Error {
    using Error::Error;
};

// Matrix/vector shapes are inconsistent.
struct DimensionMismatch : Error {
    using Error::Error;
};

// A factorization required a positive definite input and did not get one.
struct NotPositiveDefinite : Error {
    using Error::Error;
};

// An operation needs the ground truth (b*, Sigma, sigma2) and it is absent.
struct TruthRequired : Error {
    using Error::Error;
};

// A trajectory is missing the per-step Jacobian records needed downstream.
struct IncompleteTrajectory : Error {
    using Error::Error;
};

// File input/output failure; message carries the path.
struct IoError : Error {
    using Error::Error;
};

// Experiment configuration is invalid (CLI maps this to exit code 2).
struct ConfigError : Error {
    using Error::Error;
};

} // namespace itrisk

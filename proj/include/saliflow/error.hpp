#pragma once

#include <stdexcept>
#include <string>

namespace saliflow {

// Base type for all library errors. Subtypes exist so callers (and the CLI
// exit-code mapping) can tell configuration problems from data problems from
// missing external pieces.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid configuration: bad run files, out-of-range hyperparameters,
// unknown keys, invalid generator/model configs.
struct ConfigError : Error {
    using Error::Error;
};

// Filesystem-level failures: file missing, unreadable, unwritable.
struct IoError : Error {
    using Error::Error;
};

// Malformed on-disk content: bad magic, truncated files, dimension
// overflow, corrupt manifests.
struct FormatError : Error {
    using Error::Error;
};

// Mismatched raster/field/tensor dimensions between values that must agree.
struct DimensionError : Error {
    using Error::Error;
};

// Invalid in-memory input: empty mask, singular affine, out-of-range
// probabilities, even attention kernel, indivisible reduction, etc.
struct ValueError : Error {
    using Error::Error;
};

// A named backend or estimator is not registered / its external program
// cannot be found.
struct UnavailableError : Error {
    using Error::Error;
};

// An external backend was invoked but failed; carries captured diagnostics.
struct BackendFailure : Error {
    BackendFailure(const std::string& msg, std::string diagnostics)
        : Error(msg), diagnostics_(std::move(diagnostics)) {}
    const std::string& diagnostics() const noexcept { return diagnostics_; }

private:
    std::string diagnostics_;
};

// Training aborted (non-finite loss, incompatible checkpoint, ...).
struct TrainError : Error {
    using Error::Error;
};

}  // namespace saliflow

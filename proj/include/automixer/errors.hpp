#pragma once

#include <stdexcept>
#include <string>

namespace automixer {

/// Base of every error raised by the library. `kind()` is a short stable
/// token used by the CLI when it prints machine-parsable failure lines.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
    virtual const char* kind() const noexcept = 0;
};

/// Tensor shapes that do not fit an operation.
class DimensionError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "dimension"; }
};

/// Invalid or inconsistent hyperparameters, infeasible compression, bad config files.
class ConfigError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "config"; }
};

/// Out-of-domain numeric arguments (e.g. dropout probability >= 1).
class ParameterError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "parameter"; }
};

/// Malformed or unusable input data.
class DataError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "data"; }
};

/// Channel layout of an input does not match the model or schema.
class SchemaError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "schema"; }
};

/// API misuse (backward on a non-scalar, empty metric mask, ...).
class UsageError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "usage"; }
};

/// Optimization diverged or produced non-finite values.
class TrainingError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "training"; }
};

}  // namespace automixer

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace sum {

/// Base error carrying the name of the component that failed.
/// The CLI maps subclasses to exit codes: validation-type errors -> 2,
/// numeric/divergence errors -> 3.
class Error : public std::runtime_error {
public:
    Error(std::string component, const std::string& message)
        : std::runtime_error("[" + component + "] " + message),
          component_(std::move(component)) {}

    const std::string& component() const noexcept { return component_; }

private:
    std::string component_;
};

/// Invalid inputs: bad config values, malformed files, inconsistent data.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Dimension or shape mismatch between operands.
class ShapeError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// Out-of-range or inconsistent parameter value.
class ParamError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// Filesystem-level failure (missing file, unreadable directory).
class IoError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// File exists but its contents do not match the expected layout.
class FormatError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// Non-finite value produced where a finite one is required.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Training objective blew up or went non-finite.
class DivergenceError : public NumericError {
public:
    using NumericError::NumericError;
};

}  // namespace sum

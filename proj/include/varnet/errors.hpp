#pragma once

#include <stdexcept>
#include <string>

namespace varnet {

/// Invalid numeric parameter or violated type invariant.
class ParameterError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Base for conditions where the input is well formed but the analysis has
/// no answer (no throttle in a trace, too few samples for a CI, ...).
class AnalysisError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NoThrottleDetected : public AnalysisError {
public:
    using AnalysisError::AnalysisError;
};

class TraceTooShort : public AnalysisError {
public:
    using AnalysisError::AnalysisError;
};

class InsufficientSamples : public AnalysisError {
public:
    using AnalysisError::AnalysisError;
};

class DegenerateSample : public AnalysisError {
public:
    using AnalysisError::AnalysisError;
};

/// Schema or field validation failure while reading an input file.
/// `field()` is a path such as "links[2].rate_gbps".
class ValidationError : public std::runtime_error {
public:
    ValidationError(std::string field, const std::string& message)
        : std::runtime_error(field + ": " + message), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

}  // namespace varnet

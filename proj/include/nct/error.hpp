#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nct {

enum class ErrorCode {
    DimensionTooSmall,
    DegenerateBasis,
    IndexOutOfRange,
    ZeroFeature,
    LabelInactive,
    ShapeMismatch,
    StaleCache,
    EmptyClass,
    DegenerateMean,
    UnknownClass,
    DegenerateInterpolation,
    NotEnoughClasses,
    NotEnoughSamples,
    MissingTeacher,
    FrozenViolation,
    EmptyList,
    TooFewClasses,
    DegenerateBetweenClass,
    NotConverged,
    InvalidArgument,
    ConfigError,
    ParseError,
    InvariantViolation,
};

std::string_view error_code_name(ErrorCode code) noexcept;

/// Every library failure carries a machine-readable code; the CLI prints it
/// as `ERROR <code>: <message>`.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace nct

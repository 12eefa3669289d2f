#include "nct/error.hpp"

namespace nct {

std::string_view error_code_name(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::DimensionTooSmall: return "DimensionTooSmall";
        case ErrorCode::DegenerateBasis: return "DegenerateBasis";
        case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
        case ErrorCode::ZeroFeature: return "ZeroFeature";
        case ErrorCode::LabelInactive: return "LabelInactive";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::StaleCache: return "StaleCache";
        case ErrorCode::EmptyClass: return "EmptyClass";
        case ErrorCode::DegenerateMean: return "DegenerateMean";
        case ErrorCode::UnknownClass: return "UnknownClass";
        case ErrorCode::DegenerateInterpolation: return "DegenerateInterpolation";
        case ErrorCode::NotEnoughClasses: return "NotEnoughClasses";
        case ErrorCode::NotEnoughSamples: return "NotEnoughSamples";
        case ErrorCode::MissingTeacher: return "MissingTeacher";
        case ErrorCode::FrozenViolation: return "FrozenViolation";
        case ErrorCode::EmptyList: return "EmptyList";
        case ErrorCode::TooFewClasses: return "TooFewClasses";
        case ErrorCode::DegenerateBetweenClass: return "DegenerateBetweenClass";
        case ErrorCode::NotConverged: return "NotConverged";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::ConfigError: return "ConfigError";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::InvariantViolation: return "InvariantViolation";
    }
    return "Unknown";
}

}  // namespace nct

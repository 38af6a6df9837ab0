#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fpf {

enum class ErrorCode {
    InvalidArgument,
    ZeroMass,
    NonFinite,
    SupportMismatch,
    BadBandwidth,
    DegenerateTestFunction,
    TooFewParticles,
    Blowup,
    BadStep,
    DegenerateDensity,
    SolverFailure,
    EmptyBasis,
    SingularGram,
    BadConstant,
    StepTooLarge,
    CFLViolation,
    ConfigError,
};

constexpr std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::ZeroMass: return "ZeroMass";
        case ErrorCode::NonFinite: return "NonFinite";
        case ErrorCode::SupportMismatch: return "SupportMismatch";
        case ErrorCode::BadBandwidth: return "BadBandwidth";
        case ErrorCode::DegenerateTestFunction: return "DegenerateTestFunction";
        case ErrorCode::TooFewParticles: return "TooFewParticles";
        case ErrorCode::Blowup: return "Blowup";
        case ErrorCode::BadStep: return "BadStep";
        case ErrorCode::DegenerateDensity: return "DegenerateDensity";
        case ErrorCode::SolverFailure: return "SolverFailure";
        case ErrorCode::EmptyBasis: return "EmptyBasis";
        case ErrorCode::SingularGram: return "SingularGram";
        case ErrorCode::BadConstant: return "BadConstant";
        case ErrorCode::StepTooLarge: return "StepTooLarge";
        case ErrorCode::CFLViolation: return "CFLViolation";
        case ErrorCode::ConfigError: return "ConfigError";
    }
    return "Unknown";
}

/// Exception carrying a machine-checkable error code.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

/// Configuration problem; `field()` names the offending key.
class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& what)
        : Error(ErrorCode::ConfigError, field + ": " + what), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
    throw Error(code, what);
}

inline void require(bool cond, ErrorCode code, const std::string& what) {
    if (!cond) fail(code, what);
}

}  // namespace fpf

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sgf {

enum class ErrorKind {
    NotPositiveDefinite,
    SingularMatrix,
    SingularInnovationCov,
    SingularHessian,
    DimensionMismatch,
    InvalidDimension,
    InvalidArgument,
    Unsupported,
    OptimizerDidNotConverge,
    LineSearchFailed,
    LengthMismatch,
    ConfigError,
    IoError,
    NonFiniteEstimate,
};

constexpr std::string_view to_string(ErrorKind kind) noexcept
{
    switch (kind) {
    case ErrorKind::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorKind::SingularMatrix: return "SingularMatrix";
    case ErrorKind::SingularInnovationCov: return "SingularInnovationCov";
    case ErrorKind::SingularHessian: return "SingularHessian";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::InvalidDimension: return "InvalidDimension";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::Unsupported: return "Unsupported";
    case ErrorKind::OptimizerDidNotConverge: return "OptimizerDidNotConverge";
    case ErrorKind::LineSearchFailed: return "LineSearchFailed";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::NonFiniteEstimate: return "NonFiniteEstimate";
    }
    return "Unknown";
}

/// Every failure raised by the library carries a machine-readable kind.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind)
    {
    }

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline void require(bool condition, ErrorKind kind, const std::string& what)
{
    if (!condition) {
        throw Error(kind, what);
    }
}

} // namespace sgf

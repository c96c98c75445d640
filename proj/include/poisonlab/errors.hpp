#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace poisonlab {

enum class ErrorCode {
    InvalidShape,
    NonFinite,
    SingularMatrix,
    NumericallySingular,
    NoConvergence,
    ZeroDiagonal,
    ZeroPivot,
    CgBreakdown,
    DegenerateSpectrum,
    InnerSolveFailure,
    PreconditionFailed,
    InvalidAlpha,
    NotSymmetric,
    DefectiveMatrix,
    TooFewSamples,
    ZeroVariance,
    InvalidConfig,
    IoError,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Exception carrying a machine-checkable error kind.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace poisonlab

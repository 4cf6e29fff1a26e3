#pragma once

#include <stdexcept>
#include <string>

namespace pdesrc {

enum class ErrorKind {
    SingularPoint,
    QuadratureFailure,
    OutsideROC,
    PoleEvaluation,
    Unsupported,
    NotUniform,
    PoleAtFrequency,
    RankDeficient,
    DegenerateGeometry,
    ShapeError,
    OrderTooLarge,
    DefectiveEigensystem,
    IllConditionedVandermonde,
    NoConvergence,
    ConnectivityFailure,
    AllZeroSignal,
    InvalidArgument,
    ConfigError,
    IoError
};

const char* to_string(ErrorKind kind);

// All library failures are reported through this type so callers can branch on kind().
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
    throw Error(kind, what);
}

} // namespace pdesrc

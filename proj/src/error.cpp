#include "pdesrc/error.hpp"

namespace pdesrc {

const char* to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::SingularPoint: return "SingularPoint";
    case ErrorKind::QuadratureFailure: return "QuadratureFailure";
    case ErrorKind::OutsideROC: return "OutsideROC";
    case ErrorKind::PoleEvaluation: return "PoleEvaluation";
    case ErrorKind::Unsupported: return "Unsupported";
    case ErrorKind::NotUniform: return "NotUniform";
    case ErrorKind::PoleAtFrequency: return "PoleAtFrequency";
    case ErrorKind::RankDeficient: return "RankDeficient";
    case ErrorKind::DegenerateGeometry: return "DegenerateGeometry";
    case ErrorKind::ShapeError: return "ShapeError";
    case ErrorKind::OrderTooLarge: return "OrderTooLarge";
    case ErrorKind::DefectiveEigensystem: return "DefectiveEigensystem";
    case ErrorKind::IllConditionedVandermonde: return "IllConditionedVandermonde";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::ConnectivityFailure: return "ConnectivityFailure";
    case ErrorKind::AllZeroSignal: return "AllZeroSignal";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::IoError: return "IoError";
    }
    return "Unknown";
}

} // namespace pdesrc

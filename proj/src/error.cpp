#include "livseg/error.hpp"

namespace livseg {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
    case ErrorKind::MalformedHeader: return "MalformedHeader";
    case ErrorKind::UnsupportedDatatype: return "UnsupportedDatatype";
    case ErrorKind::TruncatedData: return "TruncatedData";
    case ErrorKind::IoFailure: return "IoFailure";
    case ErrorKind::InvalidVolume: return "InvalidVolume";
    case ErrorKind::InvalidLabelValue: return "InvalidLabelValue";
    case ErrorKind::InvalidOrientationCode: return "InvalidOrientationCode";
    case ErrorKind::DegenerateOutputDims: return "DegenerateOutputDims";
    case ErrorKind::RangeViolation: return "RangeViolation";
    case ErrorKind::TileLargerThanSlice: return "TileLargerThanSlice";
    case ErrorKind::ConstantVolume: return "ConstantVolume";
    case ErrorKind::StepOutOfRange: return "StepOutOfRange";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::EmptyGroundTruth: return "EmptyGroundTruth";
    case ErrorKind::EmptyMask: return "EmptyMask";
    case ErrorKind::EmptyBag: return "EmptyBag";
    case ErrorKind::TooFewRecords: return "TooFewRecords";
    case ErrorKind::FoldCountMismatch: return "FoldCountMismatch";
    case ErrorKind::LabelAbsent: return "LabelAbsent";
    case ErrorKind::InvalidLevel: return "InvalidLevel";
    case ErrorKind::DuplicateMaterial: return "DuplicateMaterial";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    }
    return "Unknown";
}

Error::Error(ErrorKind kind, const std::string &detail)
    : std::runtime_error(std::string(to_string(kind)) + ": " + detail), kind_(kind) {}

} // namespace livseg

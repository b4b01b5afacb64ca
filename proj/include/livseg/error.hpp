#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace livseg {

enum class ErrorKind {
    // volume_io
    MalformedHeader,
    UnsupportedDatatype,
    TruncatedData,
    IoFailure,
    InvalidVolume,
    InvalidLabelValue,
    // preprocess
    InvalidOrientationCode,
    DegenerateOutputDims,
    RangeViolation,
    TileLargerThanSlice,
    ConstantVolume,
    // schedulers
    StepOutOfRange,
    NonFiniteLoss,
    // metrics
    ShapeMismatch,
    EmptyGroundTruth,
    EmptyMask,
    EmptyBag,
    // experiment
    TooFewRecords,
    FoldCountMismatch,
    // mesh_export
    LabelAbsent,
    InvalidLevel,
    DuplicateMaterial,
    // shared
    InvalidConfig,
};

std::string_view to_string(ErrorKind kind) noexcept;

// Every domain failure in the library is reported through this type. what()
// is "<KindName>: <detail>" so the name survives into CLI diagnostics.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string &detail);

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

} // namespace livseg

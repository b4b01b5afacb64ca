#include "livseg/volume.hpp"

#include <cmath>
#include <string>

namespace livseg {

namespace {

int axis_of(char c) {
    switch (c) {
    case 'R': case 'L': return 0;
    case 'A': case 'P': return 1;
    case 'S': case 'I': return 2;
    default: return -1;
    }
}

} // namespace

Orientation Orientation::parse(std::string_view code) {
    if (code.size() != 3) {
        throw Error(ErrorKind::InvalidOrientationCode, "expected three letters, got '" + std::string(code) + "'");
    }
    Orientation o;
    std::array<bool, 3> seen{false, false, false};
    for (std::size_t i = 0; i < 3; ++i) {
        const char c = static_cast<char>(code[i] >= 'a' && code[i] <= 'z' ? code[i] - 'a' + 'A' : code[i]);
        const int axis = axis_of(c);
        if (axis < 0 || seen[static_cast<std::size_t>(axis)]) {
            throw Error(ErrorKind::InvalidOrientationCode, "'" + std::string(code) + "' is not a permutation of R/L, A/P, S/I");
        }
        seen[static_cast<std::size_t>(axis)] = true;
        o.codes_[i] = c;
    }
    return o;
}

int Orientation::physical_axis(std::size_t axis) const { return axis_of(codes_[axis]); }

int Orientation::sign(std::size_t axis) const {
    const char c = codes_[axis];
    return (c == 'R' || c == 'A' || c == 'S') ? 1 : -1;
}

template <typename T>
void validate(const Grid<T> &g) {
    for (std::size_t i = 0; i < 3; ++i) {
        if (g.dims[i] == 0) {
            throw Error(ErrorKind::InvalidVolume, "zero extent on axis " + std::to_string(i));
        }
        if (!(g.spacing[i] > 0.0) || !std::isfinite(g.spacing[i])) {
            throw Error(ErrorKind::InvalidVolume, "non-positive spacing on axis " + std::to_string(i));
        }
    }
    if (g.data.size() != g.voxel_count()) {
        throw Error(ErrorKind::InvalidVolume, "data length " + std::to_string(g.data.size()) +
                                                  " does not match dims product " + std::to_string(g.voxel_count()));
    }
}

template void validate(const Grid<float> &);
template void validate(const Grid<std::uint8_t> &);

LabelVolume binarize(const LabelVolume &labels, std::uint8_t label) {
    LabelVolume out(labels.dims, labels.spacing, labels.orientation);
    for (std::size_t i = 0; i < labels.data.size(); ++i) {
        out.data[i] = labels.data[i] == label ? 1 : 0;
    }
    return out;
}

LabelVolume to_labels(const Volume &v) {
    LabelVolume out(v.dims, v.spacing, v.orientation);
    for (std::size_t i = 0; i < v.data.size(); ++i) {
        const float x = v.data[i];
        if (!std::isfinite(x) || x < 0.0f || x > 255.0f || std::floor(x) != x) {
            throw Error(ErrorKind::InvalidLabelValue, "voxel " + std::to_string(i) + " holds " + std::to_string(x));
        }
        out.data[i] = static_cast<std::uint8_t>(x);
    }
    return out;
}

} // namespace livseg

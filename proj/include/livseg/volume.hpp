#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "livseg/error.hpp"

namespace livseg {

using Dims = std::array<std::size_t, 3>;
using Spacing = std::array<double, 3>;

// Anatomical direction each array axis increases towards, one letter per
// axis from {R,L,A,P,S,I}. "RAS" means +i -> right, +j -> anterior,
// +k -> superior (the NIfTI world frame). Every physical axis must appear
// exactly once.
class Orientation {
public:
    Orientation() = default;

    // Throws InvalidOrientationCode.
    static Orientation parse(std::string_view code);

    char code(std::size_t axis) const { return codes_[axis]; }
    // 0 = left/right, 1 = posterior/anterior, 2 = inferior/superior.
    int physical_axis(std::size_t axis) const;
    // +1 when the array axis points along the positive world direction (R/A/S).
    int sign(std::size_t axis) const;

    std::string str() const { return {codes_.begin(), codes_.end()}; }

    friend bool operator==(const Orientation &, const Orientation &) = default;

private:
    std::array<char, 3> codes_{'R', 'A', 'S'};
};

// Dense 3D grid. Voxel (x, y, z) lives at data[x + nx * (y + ny * z)]:
// x (axis 0) varies fastest, matching the NIfTI on-disk order.
template <typename T>
struct Grid {
    Dims dims{0, 0, 0};
    Spacing spacing{1.0, 1.0, 1.0};
    Orientation orientation{};
    std::vector<T> data;

    Grid() = default;
    Grid(Dims d, Spacing s, Orientation o = {}, T fill = T{})
        : dims(d), spacing(s), orientation(o), data(d[0] * d[1] * d[2], fill) {}

    std::size_t size() const noexcept { return data.size(); }
    std::size_t voxel_count() const noexcept { return dims[0] * dims[1] * dims[2]; }
    std::size_t slice_size() const noexcept { return dims[0] * dims[1]; }

    std::size_t index(std::size_t x, std::size_t y, std::size_t z) const noexcept {
        return x + dims[0] * (y + dims[1] * z);
    }
    T &at(std::size_t x, std::size_t y, std::size_t z) { return data[index(x, y, z)]; }
    const T &at(std::size_t x, std::size_t y, std::size_t z) const { return data[index(x, y, z)]; }

    bool same_geometry(const auto &other) const {
        return dims == other.dims && spacing == other.spacing && orientation == other.orientation;
    }
};

using Volume = Grid<float>;
// Labels: 0 background, 1 liver, larger values for tumor/vessel classes.
using LabelVolume = Grid<std::uint8_t>;

// Throws InvalidVolume when dims are zero, spacing is non-positive or
// non-finite, or the data length disagrees with the dims.
template <typename T>
void validate(const Grid<T> &g);

extern template void validate(const Grid<float> &);
extern template void validate(const Grid<std::uint8_t> &);

// Foreground indicator for one label value.
LabelVolume binarize(const LabelVolume &labels, std::uint8_t label);

// Converts an intensity volume holding integral values in [0, 255].
// Throws InvalidLabelValue otherwise.
LabelVolume to_labels(const Volume &v);

} // namespace livseg

#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "livseg/config.hpp"
#include "livseg/volume.hpp"

namespace livseg {

struct PreprocessConfig {
    double clip_lo = -100.0; // HU
    double clip_hi = 400.0;  // HU
    double rescale_factor = 0.5;
    // Multiple of the mean per-bin count (tile_pixels / bins) at which tile
    // histograms are clipped; +inf disables clipping.
    double clahe_clip_limit = 2.0;
    std::size_t clahe_tiles_x = 8;
    std::size_t clahe_tiles_y = 8;
    std::size_t clahe_bins = 256;
    std::size_t slab_size = 5;
    Orientation target_orientation = Orientation::parse("RAS");

    // Throws InvalidConfig.
    void validate() const;

    // Keys: clip_lo, clip_hi, rescale_factor, clahe_clip_limit (number or
    // "inf"), clahe_tiles ("8x8" or a single integer), clahe_bins, slab_size,
    // target_orientation. Unset keys keep their defaults.
    static PreprocessConfig from(const KeyValueConfig &kv);
};

// 2.5D sample: slab_size consecutive axial planes centred on one slice.
struct Slab {
    std::string record_id;
    std::size_t center_index = 0;
    std::size_t nx = 0;
    std::size_t ny = 0;
    std::vector<std::size_t> source_indices; // slice index of each plane
    std::vector<float> planes;               // plane-major, x fastest

    std::size_t depth() const { return source_indices.size(); }
};

Volume reorient(const Volume &v, const Orientation &target);
LabelVolume reorient(const LabelVolume &v, const Orientation &target);

// Output dims are round(dims * factor) on every axis, spacing / factor.
// Intensities are resampled trilinearly, labels by nearest neighbour.
// Throws DegenerateOutputDims, InvalidConfig.
Volume rescale(const Volume &v, double factor);
LabelVolume rescale(const LabelVolume &v, double factor);

// NaN voxels map to lo.
Volume clip(const Volume &v, double lo, double hi);

// Affine map of [lo, hi] onto [0, 1]. Throws RangeViolation.
Volume standardize_range(const Volume &v, double lo, double hi);

// Per-axial-slice CLAHE on [0,1] data. Throws RangeViolation, TileLargerThanSlice.
Volume clahe(const Volume &v, const PreprocessConfig &cfg);

// Zero mean, unit population standard deviation. Throws ConstantVolume.
Volume normalize(const Volume &v);

// One slab per axial slice; out-of-range neighbours replicate the edge slice.
std::vector<Slab> to_slabs(const Volume &v, std::size_t slab_size, const std::string &record_id = {});

struct PipelineResult {
    std::vector<Slab> slabs;
    LabelVolume mask;
};

// reorient, rescale, clip, standardize, CLAHE, normalize, slab. The mask
// only follows the geometric steps.
PipelineResult run_pipeline(const Volume &v, const LabelVolume &mask, const PreprocessConfig &cfg,
                            const std::string &record_id = {});

// Writes one raw little-endian float32 file per slab plus manifest.csv
// (record_id,center_index,nx,ny,depth,file).
void write_slabs(const std::vector<Slab> &slabs, const std::filesystem::path &dir);

} // namespace livseg

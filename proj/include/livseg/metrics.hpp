#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "livseg/volume.hpp"

namespace livseg {

// Voxel coordinate (x, y, z).
using VoxelIndex = std::array<std::size_t, 3>;

struct SurfaceDistanceBag {
    std::vector<double> pred_to_gt; // mm, one per predicted surface voxel
    std::vector<double> gt_to_pred; // mm, one per ground-truth surface voxel
};

// Per-record evaluation. Surface-distance fields (and rvd when the ground
// truth is empty but the prediction is not) are std::nullopt when undefined;
// they are never silently reported as 0.
struct MetricReport {
    std::string record_id;
    double dice_pct = 0.0;
    double iou_pct = 0.0;
    std::optional<double> rvd;
    std::optional<double> asd_mm;
    std::optional<double> rmsd_mm;
    std::optional<double> msd_mm; // Hausdorff distance
    std::optional<double> hd95_mm;
};

// Masks are binary: any nonzero voxel is foreground. All pairwise operations
// require identical dims, spacing and orientation (ShapeMismatch otherwise).

// 2|P n G| / (|P| + |G|) * 100; 100 when both are empty.
double dice(const LabelVolume &pred, const LabelVolume &gt);
// |P n G| / |P u G| * 100; 100 when both are empty.
double iou(const LabelVolume &pred, const LabelVolume &gt);
// (|P| - |G|) / |G|; negative means under-segmentation. Throws EmptyGroundTruth.
double rvd(const LabelVolume &pred, const LabelVolume &gt);

// Foreground voxels with at least one 6-connected background or
// out-of-bounds neighbour, in x-fastest scan order.
std::vector<VoxelIndex> extract_surface(const LabelVolume &mask);

// Exact Euclidean distances (mm, voxel centre to voxel centre) from each
// surface voxel of one mask to the nearest surface voxel of the other.
// Uses a separable squared distance transform with per-axis spacing.
// Throws EmptyMask, ShapeMismatch.
SurfaceDistanceBag surface_distances(const LabelVolume &pred, const LabelVolume &gt);

// Statistics over the pooled multiset pred_to_gt + gt_to_pred. hd95 is the
// 95th percentile with linear interpolation between order statistics
// (position 0.95 * (n - 1) in the sorted pool). Throw EmptyBag.
double asd(const SurfaceDistanceBag &bag);
double rmsd(const SurfaceDistanceBag &bag);
double msd(const SurfaceDistanceBag &bag);
double hd95(const SurfaceDistanceBag &bag);

// Mean binary cross-entropy with probabilities clamped to [eps, 1 - eps].
inline constexpr double kBceEpsilon = 1e-7;
double bce(const Volume &prob, const LabelVolume &target);

MetricReport evaluate_case(const LabelVolume &pred, const LabelVolume &gt, std::string record_id = {});

// Column order: record_id,dice,iou,rvd,asd,rmsd,hd,hd95. Undefined values are
// written as "NA"; numbers use the shortest round-trip decimal form.
std::string_view metric_csv_header();
std::string to_csv_row(const MetricReport &r);
// Inverse of to_csv_row. Throws InvalidConfig on malformed input.
MetricReport parse_csv_row(std::string_view line);
// JSON object with the same keys; undefined values are null.
std::string to_json(const MetricReport &r);

} // namespace livseg

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "livseg/volume.hpp"

namespace livseg {

/// NIfTI-1 single-file reader/writer (.nii and .nii.gz, little-endian).
///
/// Honored header fields:
///   - sizeof_hdr (must be 348) and magic (must be "n+1")
///   - dim[0..3]; dim[4..dim[0]] must all be 1
///   - datatype: UINT8 (2), INT16 (4), FLOAT32 (16), INT8 (256), UINT16 (512)
///   - pixdim[1..3] as spacing in mm (must be finite and > 0)
///   - vox_offset (payload start, >= 352)
///   - scl_slope / scl_inter (value = slope * stored + inter; skipped when
///     slope is 0 or non-finite, or when slope == 1 and inter == 0)
///   - sform (srow_*) when sform_code > 0, else qform quaternion + qfac when
///     qform_code > 0, else RAS. Each array axis maps to the world axis with
///     the largest absolute direction cosine.
/// Everything else (intent, slice timing, cal_min/max, extensions, xyzt_units
/// beyond assuming mm, descrip) is ignored on read.
///
/// gzip is detected from the 1f 8b magic, independent of the file suffix. The
/// writer compresses when the path ends in ".gz".

// Throws MalformedHeader, UnsupportedDatatype, TruncatedData, IoFailure.
Volume read_volume(const std::filesystem::path &path);

// read_volume followed by to_labels; additionally throws InvalidLabelValue.
LabelVolume read_label_volume(const std::filesystem::path &path);

// Parses an in-memory file image (already decompressed or not).
Volume decode_nifti(std::span<const std::uint8_t> bytes);

// Volumes are stored as FLOAT32 with no scaling, so NaN payloads and signed
// zeros survive bit-exact. Labels are stored as UINT8.
std::vector<std::uint8_t> encode_nifti(const Volume &v);
std::vector<std::uint8_t> encode_nifti(const LabelVolume &v);

// Throws InvalidVolume, IoFailure.
void write_volume(const Volume &v, const std::filesystem::path &path);
void write_volume(const LabelVolume &v, const std::filesystem::path &path);

std::vector<std::uint8_t> gzip_compress(std::span<const std::uint8_t> bytes);
// Throws MalformedHeader on a corrupt stream.
std::vector<std::uint8_t> gzip_decompress(std::span<const std::uint8_t> bytes);

} // namespace livseg

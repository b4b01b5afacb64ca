#include "livseg/volume_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

namespace livseg {

namespace {

constexpr std::size_t kHeaderSize = 348;
constexpr std::size_t kDefaultVoxOffset = 352;

enum DataType : std::int16_t {
    kUint8 = 2,
    kInt16 = 4,
    kFloat32 = 16,
    kInt8 = 256,
    kUint16 = 512,
};

// Field offsets inside the 348-byte header.
namespace off {
constexpr std::size_t sizeof_hdr = 0;
constexpr std::size_t dim = 40;
constexpr std::size_t datatype = 70;
constexpr std::size_t bitpix = 72;
constexpr std::size_t pixdim = 76;
constexpr std::size_t vox_offset = 108;
constexpr std::size_t scl_slope = 112;
constexpr std::size_t scl_inter = 116;
constexpr std::size_t xyzt_units = 123;
constexpr std::size_t descrip = 148;
constexpr std::size_t qform_code = 252;
constexpr std::size_t sform_code = 254;
constexpr std::size_t quatern_b = 256;
constexpr std::size_t srow_x = 280;
constexpr std::size_t magic = 344;
} // namespace off

template <typename T>
T load(std::span<const std::uint8_t> bytes, std::size_t at) {
    T value;
    std::memcpy(&value, bytes.data() + at, sizeof(T));
    return value;
}

template <typename T>
void store(std::vector<std::uint8_t> &bytes, std::size_t at, T value) {
    std::memcpy(bytes.data() + at, &value, sizeof(T));
}

std::size_t bytes_per_voxel(std::int16_t datatype) {
    switch (datatype) {
    case kUint8: case kInt8: return 1;
    case kInt16: case kUint16: return 2;
    case kFloat32: return 4;
    default: return 0;
    }
}

using Mat3 = std::array<std::array<double, 3>, 3>;

Mat3 quaternion_to_matrix(double b, double c, double d, double qfac) {
    double a = 1.0 - (b * b + c * c + d * d);
    if (a < 1.0e-7) {
        // Treated as a 180 degree rotation: renormalize (b, c, d), a = 0.
        const double n = std::sqrt(b * b + c * c + d * d);
        if (n > 0.0) {
            b /= n;
            c /= n;
            d /= n;
        }
        a = 0.0;
    } else {
        a = std::sqrt(a);
    }
    Mat3 r{};
    r[0] = {a * a + b * b - c * c - d * d, 2.0 * (b * c - a * d), 2.0 * (b * d + a * c)};
    r[1] = {2.0 * (b * c + a * d), a * a + c * c - b * b - d * d, 2.0 * (c * d - a * b)};
    r[2] = {2.0 * (b * d - a * c), 2.0 * (c * d + a * b), a * a + d * d - c * c - b * b};
    for (auto &row : r) row[2] *= qfac;
    return r;
}

Orientation orientation_from_matrix(const Mat3 &m) {
    static constexpr std::array<std::array<char, 2>, 3> letters{{{'R', 'L'}, {'A', 'P'}, {'S', 'I'}}};
    std::string code;
    for (std::size_t col = 0; col < 3; ++col) {
        std::size_t best = 0;
        for (std::size_t row = 1; row < 3; ++row) {
            if (std::abs(m[row][col]) > std::abs(m[best][col])) best = row;
        }
        if (m[best][col] == 0.0 || !std::isfinite(m[best][col])) {
            throw Error(ErrorKind::MalformedHeader, "degenerate orientation matrix");
        }
        code.push_back(letters[best][m[best][col] > 0.0 ? 0 : 1]);
    }
    try {
        return Orientation::parse(code);
    } catch (const Error &) {
        throw Error(ErrorKind::MalformedHeader, "orientation matrix maps two axes to the same direction (" + code + ")");
    }
}

std::vector<std::uint8_t> read_file(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorKind::IoFailure, "cannot open '" + path.string() + "'");
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) {
        throw Error(ErrorKind::IoFailure, "read failed for '" + path.string() + "'");
    }
    return bytes;
}

void write_file(const std::filesystem::path &path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorKind::IoFailure, "cannot create '" + path.string() + "'");
    }
    out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw Error(ErrorKind::IoFailure, "write failed for '" + path.string() + "'");
    }
}

bool is_gzip(std::span<const std::uint8_t> bytes) {
    return bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b;
}

bool wants_gzip(const std::filesystem::path &path) {
    const auto ext = path.extension().string();
    return ext == ".gz" || ext == ".GZ";
}

template <typename T>
std::vector<std::uint8_t> encode_grid(const Grid<T> &v, std::int16_t datatype) {
    validate(v);
    const std::size_t bpv = sizeof(T);
    for (std::size_t i = 0; i < 3; ++i) {
        if (v.dims[i] > 32767) {
            throw Error(ErrorKind::InvalidVolume, "extent exceeds the NIfTI-1 limit of 32767");
        }
    }
    std::vector<std::uint8_t> bytes(kDefaultVoxOffset + v.data.size() * bpv, 0);

    store<std::int32_t>(bytes, off::sizeof_hdr, static_cast<std::int32_t>(kHeaderSize));
    store<std::int16_t>(bytes, off::dim, 3);
    for (std::size_t i = 0; i < 3; ++i) {
        store<std::int16_t>(bytes, off::dim + 2 * (i + 1), static_cast<std::int16_t>(v.dims[i]));
    }
    for (std::size_t i = 4; i < 8; ++i) {
        store<std::int16_t>(bytes, off::dim + 2 * i, 1);
    }
    store<std::int16_t>(bytes, off::datatype, datatype);
    store<std::int16_t>(bytes, off::bitpix, static_cast<std::int16_t>(8 * bpv));
    store<float>(bytes, off::pixdim, 1.0f);
    for (std::size_t i = 0; i < 3; ++i) {
        store<float>(bytes, off::pixdim + 4 * (i + 1), static_cast<float>(v.spacing[i]));
    }
    for (std::size_t i = 4; i < 8; ++i) {
        store<float>(bytes, off::pixdim + 4 * i, 1.0f);
    }
    store<float>(bytes, off::vox_offset, static_cast<float>(kDefaultVoxOffset));
    store<float>(bytes, off::scl_slope, 0.0f);
    store<float>(bytes, off::scl_inter, 0.0f);
    bytes[off::xyzt_units] = 2; // mm
    const char descrip[] = "livseg";
    std::memcpy(bytes.data() + off::descrip, descrip, sizeof(descrip) - 1);

    // Axis-aligned sform: column j = sign * spacing along the mapped world axis.
    store<std::int16_t>(bytes, off::qform_code, 0);
    store<std::int16_t>(bytes, off::sform_code, 2);
    for (std::size_t col = 0; col < 3; ++col) {
        const auto row = static_cast<std::size_t>(v.orientation.physical_axis(col));
        const float value = static_cast<float>(v.orientation.sign(col) * v.spacing[col]);
        store<float>(bytes, off::srow_x + 16 * row + 4 * col, value);
    }
    std::memcpy(bytes.data() + off::magic, "n+1\0", 4);

    std::memcpy(bytes.data() + kDefaultVoxOffset, v.data.data(), v.data.size() * bpv);
    return bytes;
}

void emit(std::span<const std::uint8_t> bytes, const std::filesystem::path &path) {
    if (wants_gzip(path)) {
        write_file(path, gzip_compress(bytes));
    } else {
        write_file(path, bytes);
    }
}

} // namespace

std::vector<std::uint8_t> gzip_compress(std::span<const std::uint8_t> bytes) {
    z_stream zs{};
    if (deflateInit2(&zs, Z_DEFAULT_COMPRESSION, Z_DEFLATED, 15 + 16, 8, Z_DEFAULT_STRATEGY) != Z_OK) {
        throw Error(ErrorKind::IoFailure, "deflateInit2 failed");
    }
    std::vector<std::uint8_t> out(deflateBound(&zs, static_cast<uLong>(bytes.size())) + 32);
    zs.next_in = const_cast<Bytef *>(bytes.data());
    zs.avail_in = static_cast<uInt>(bytes.size());
    zs.next_out = out.data();
    zs.avail_out = static_cast<uInt>(out.size());
    const int rc = deflate(&zs, Z_FINISH);
    const auto produced = zs.total_out;
    deflateEnd(&zs);
    if (rc != Z_STREAM_END) {
        throw Error(ErrorKind::IoFailure, "gzip compression failed");
    }
    out.resize(produced);
    return out;
}

std::vector<std::uint8_t> gzip_decompress(std::span<const std::uint8_t> bytes) {
    z_stream zs{};
    if (inflateInit2(&zs, 15 + 32) != Z_OK) {
        throw Error(ErrorKind::IoFailure, "inflateInit2 failed");
    }
    std::vector<std::uint8_t> out;
    std::array<std::uint8_t, 1 << 16> chunk{};
    zs.next_in = const_cast<Bytef *>(bytes.data());
    zs.avail_in = static_cast<uInt>(bytes.size());
    int rc = Z_OK;
    while (rc != Z_STREAM_END) {
        zs.next_out = chunk.data();
        zs.avail_out = static_cast<uInt>(chunk.size());
        rc = inflate(&zs, Z_NO_FLUSH);
        if (rc == Z_DATA_ERROR || rc == Z_NEED_DICT || rc == Z_MEM_ERROR || rc == Z_STREAM_ERROR) {
            inflateEnd(&zs);
            throw Error(ErrorKind::MalformedHeader, "corrupt gzip stream");
        }
        out.insert(out.end(), chunk.data(), chunk.data() + (chunk.size() - zs.avail_out));
        // A truncated stream stops making progress; the payload length check
        // downstream reports it.
        if (rc == Z_BUF_ERROR || (zs.avail_in == 0 && zs.avail_out != 0 && rc != Z_STREAM_END)) {
            break;
        }
    }
    inflateEnd(&zs);
    return out;
}

Volume decode_nifti(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kHeaderSize) {
        throw Error(ErrorKind::MalformedHeader, "file shorter than the 348-byte header");
    }
    const auto sizeof_hdr = load<std::int32_t>(bytes, off::sizeof_hdr);
    if (sizeof_hdr != static_cast<std::int32_t>(kHeaderSize)) {
        throw Error(ErrorKind::MalformedHeader, "sizeof_hdr is " + std::to_string(sizeof_hdr) +
                                                    " (big-endian files are not supported)");
    }
    if (std::memcmp(bytes.data() + off::magic, "n+1\0", 4) != 0) {
        throw Error(ErrorKind::MalformedHeader, "magic is not \"n+1\"");
    }

    const auto ndim = load<std::int16_t>(bytes, off::dim);
    if (ndim < 1 || ndim > 7) {
        throw Error(ErrorKind::MalformedHeader, "dim[0] = " + std::to_string(ndim));
    }
    Dims dims{1, 1, 1};
    for (std::int16_t i = 1; i <= ndim; ++i) {
        const auto d = load<std::int16_t>(bytes, off::dim + 2 * static_cast<std::size_t>(i));
        if (d < 1) {
            throw Error(ErrorKind::MalformedHeader, "dim[" + std::to_string(i) + "] = " + std::to_string(d));
        }
        if (i <= 3) {
            dims[static_cast<std::size_t>(i - 1)] = static_cast<std::size_t>(d);
        } else if (d != 1) {
            throw Error(ErrorKind::MalformedHeader, "only 3D volumes are supported");
        }
    }

    const auto datatype = load<std::int16_t>(bytes, off::datatype);
    const std::size_t bpv = bytes_per_voxel(datatype);
    if (bpv == 0) {
        throw Error(ErrorKind::UnsupportedDatatype, "datatype code " + std::to_string(datatype));
    }

    Spacing spacing{1.0, 1.0, 1.0};
    for (std::size_t i = 0; i < 3; ++i) {
        const double s = i < static_cast<std::size_t>(ndim) ? load<float>(bytes, off::pixdim + 4 * (i + 1)) : 1.0;
        if (!(s > 0.0) || !std::isfinite(s)) {
            throw Error(ErrorKind::MalformedHeader, "pixdim[" + std::to_string(i + 1) + "] must be positive");
        }
        spacing[i] = s;
    }

    const float vox_offset_f = load<float>(bytes, off::vox_offset);
    if (!std::isfinite(vox_offset_f) || vox_offset_f < static_cast<float>(kDefaultVoxOffset) ||
        vox_offset_f != std::floor(vox_offset_f)) {
        throw Error(ErrorKind::MalformedHeader, "vox_offset " + std::to_string(vox_offset_f));
    }
    const auto vox_offset = static_cast<std::size_t>(vox_offset_f);

    Orientation orientation;
    const auto qform_code = load<std::int16_t>(bytes, off::qform_code);
    const auto sform_code = load<std::int16_t>(bytes, off::sform_code);
    if (sform_code > 0) {
        Mat3 m{};
        for (std::size_t row = 0; row < 3; ++row) {
            for (std::size_t col = 0; col < 3; ++col) {
                m[row][col] = load<float>(bytes, off::srow_x + 16 * row + 4 * col);
            }
        }
        orientation = orientation_from_matrix(m);
    } else if (qform_code > 0) {
        const double qfac = load<float>(bytes, off::pixdim) < 0.0f ? -1.0 : 1.0;
        orientation = orientation_from_matrix(quaternion_to_matrix(load<float>(bytes, off::quatern_b),
                                                                   load<float>(bytes, off::quatern_b + 4),
                                                                   load<float>(bytes, off::quatern_b + 8), qfac));
    }

    const std::size_t count = dims[0] * dims[1] * dims[2];
    const std::size_t payload = count * bpv;
    if (vox_offset > bytes.size() || bytes.size() - vox_offset < payload) {
        throw Error(ErrorKind::TruncatedData, "header declares " + std::to_string(payload) + " payload bytes, file has " +
                                                  std::to_string(bytes.size() > vox_offset ? bytes.size() - vox_offset : 0));
    }

    double slope = load<float>(bytes, off::scl_slope);
    double inter = load<float>(bytes, off::scl_inter);
    const bool scaled = std::isfinite(slope) && slope != 0.0 && std::isfinite(inter) && !(slope == 1.0 && inter == 0.0);

    Volume v(dims, spacing, orientation);
    const auto src = bytes.subspan(vox_offset, payload);
    auto convert = [&]<typename T>(T) {
        for (std::size_t i = 0; i < count; ++i) {
            const T raw = load<T>(src, i * sizeof(T));
            v.data[i] = scaled ? static_cast<float>(slope * static_cast<double>(raw) + inter) : static_cast<float>(raw);
        }
    };
    switch (datatype) {
    case kUint8: convert(std::uint8_t{}); break;
    case kInt8: convert(std::int8_t{}); break;
    case kInt16: convert(std::int16_t{}); break;
    case kUint16: convert(std::uint16_t{}); break;
    case kFloat32:
        if (scaled) {
            convert(float{});
        } else {
            std::memcpy(v.data.data(), src.data(), payload);
        }
        break;
    default: break;
    }
    return v;
}

Volume read_volume(const std::filesystem::path &path) {
    auto bytes = read_file(path);
    if (is_gzip(bytes)) {
        bytes = gzip_decompress(bytes);
    }
    return decode_nifti(bytes);
}

LabelVolume read_label_volume(const std::filesystem::path &path) { return to_labels(read_volume(path)); }

std::vector<std::uint8_t> encode_nifti(const Volume &v) { return encode_grid(v, kFloat32); }
std::vector<std::uint8_t> encode_nifti(const LabelVolume &v) { return encode_grid(v, kUint8); }

void write_volume(const Volume &v, const std::filesystem::path &path) { emit(encode_nifti(v), path); }
void write_volume(const LabelVolume &v, const std::filesystem::path &path) { emit(encode_nifti(v), path); }

} // namespace livseg

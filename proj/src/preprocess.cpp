#include "livseg/preprocess.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <string>

namespace livseg {

namespace {

template <typename T>
Grid<T> reorient_grid(const Grid<T> &v, const Orientation &target) {
    validate(v);
    std::array<std::size_t, 3> src_axis{};
    std::array<bool, 3> flip{};
    Dims dims{};
    Spacing spacing{};
    for (std::size_t j = 0; j < 3; ++j) {
        for (std::size_t i = 0; i < 3; ++i) {
            if (v.orientation.physical_axis(i) == target.physical_axis(j)) {
                src_axis[j] = i;
                flip[j] = v.orientation.sign(i) != target.sign(j);
            }
        }
        dims[j] = v.dims[src_axis[j]];
        spacing[j] = v.spacing[src_axis[j]];
    }

    Grid<T> out(dims, spacing, target);
    std::array<std::size_t, 3> src{};
    for (std::size_t z = 0; z < dims[2]; ++z) {
        for (std::size_t y = 0; y < dims[1]; ++y) {
            for (std::size_t x = 0; x < dims[0]; ++x) {
                const std::array<std::size_t, 3> o{x, y, z};
                for (std::size_t j = 0; j < 3; ++j) {
                    src[src_axis[j]] = flip[j] ? dims[j] - 1 - o[j] : o[j];
                }
                out.at(x, y, z) = v.at(src[0], src[1], src[2]);
            }
        }
    }
    return out;
}

// Maps output voxel centres back into the source grid for one axis.
struct AxisSample {
    std::size_t lo = 0;
    std::size_t hi = 0;
    double t = 0.0;     // weight of hi
    std::size_t nearest = 0;
};

std::vector<AxisSample> axis_samples(std::size_t n_in, std::size_t n_out) {
    std::vector<AxisSample> samples(n_out);
    const double ratio = static_cast<double>(n_in) / static_cast<double>(n_out);
    const double max_coord = static_cast<double>(n_in - 1);
    for (std::size_t o = 0; o < n_out; ++o) {
        const double s = std::clamp((static_cast<double>(o) + 0.5) * ratio - 0.5, 0.0, max_coord);
        auto &a = samples[o];
        a.lo = static_cast<std::size_t>(std::floor(s));
        a.hi = std::min(a.lo + 1, n_in - 1);
        a.t = s - static_cast<double>(a.lo);
        a.nearest = std::min(static_cast<std::size_t>(std::floor(s + 0.5)), n_in - 1);
    }
    return samples;
}

Dims rescaled_dims(const Dims &dims, double factor) {
    if (!(factor > 0.0 && factor <= 1.0)) {
        throw Error(ErrorKind::InvalidConfig, "rescale factor must lie in (0, 1], got " + std::to_string(factor));
    }
    Dims out{};
    for (std::size_t i = 0; i < 3; ++i) {
        const double scaled = std::round(static_cast<double>(dims[i]) * factor);
        if (scaled < 1.0) {
            throw Error(ErrorKind::DegenerateOutputDims,
                        "axis " + std::to_string(i) + " of extent " + std::to_string(dims[i]) + " vanishes at factor " +
                            std::to_string(factor));
        }
        out[i] = static_cast<std::size_t>(scaled);
    }
    return out;
}

double lerp(double a, double b, double t) { return a == b ? a : a + t * (b - a); }

struct TileMap {
    bool identity = false;
    std::vector<float> lut;
};

std::size_t bin_of(float v, std::size_t bins) {
    const auto b = static_cast<std::size_t>(static_cast<double>(v) * static_cast<double>(bins));
    return std::min(b, bins - 1);
}

TileMap equalization_map(const float *slice, std::size_t nx, std::size_t x0, std::size_t x1, std::size_t y0,
                         std::size_t y1, const PreprocessConfig &cfg) {
    const std::size_t bins = cfg.clahe_bins;
    std::vector<double> hist(bins, 0.0);
    for (std::size_t y = y0; y < y1; ++y) {
        for (std::size_t x = x0; x < x1; ++x) {
            hist[bin_of(slice[x + nx * y], bins)] += 1.0;
        }
    }
    const double total = static_cast<double>((x1 - x0) * (y1 - y0));

    if (std::isfinite(cfg.clahe_clip_limit)) {
        const double limit = std::max(1.0, cfg.clahe_clip_limit * total / static_cast<double>(bins));
        double excess = 0.0;
        for (auto &h : hist) {
            if (h > limit) {
                excess += h - limit;
                h = limit;
            }
        }
        const double share = excess / static_cast<double>(bins);
        for (auto &h : hist) h += share;
    }

    TileMap map;
    map.lut.resize(bins);
    double cdf = 0.0;
    double cdf_min = -1.0;
    std::vector<double> cdfs(bins);
    for (std::size_t b = 0; b < bins; ++b) {
        cdf += hist[b];
        cdfs[b] = cdf;
        if (cdf_min < 0.0 && hist[b] > 0.0) cdf_min = cdf;
    }
    const double denom = cdf - cdf_min;
    if (!(denom > 1e-12 * total)) {
        map.identity = true; // single occupied bin: nothing to equalize
        return map;
    }
    for (std::size_t b = 0; b < bins; ++b) {
        map.lut[b] = static_cast<float>(std::clamp((cdfs[b] - cdf_min) / denom, 0.0, 1.0));
    }
    return map;
}

float apply_map(const TileMap &m, float v, std::size_t bins) { return m.identity ? v : m.lut[bin_of(v, bins)]; }

// Per-pixel interpolation between neighbouring tile centres along one axis.
struct TileBlend {
    std::size_t a = 0;
    std::size_t b = 0;
    double w = 0.0; // weight of b
};

std::vector<TileBlend> tile_blends(std::size_t n, std::size_t tiles) {
    std::vector<double> centre(tiles);
    for (std::size_t t = 0; t < tiles; ++t) {
        const std::size_t start = t * n / tiles;
        const std::size_t end = (t + 1) * n / tiles;
        centre[t] = 0.5 * static_cast<double>(start + end - 1);
    }
    std::vector<TileBlend> out(n);
    for (std::size_t p = 0; p < n; ++p) {
        const double x = static_cast<double>(p);
        auto &blend = out[p];
        if (x <= centre.front()) {
            blend = {0, 0, 0.0};
        } else if (x >= centre.back()) {
            blend = {tiles - 1, tiles - 1, 0.0};
        } else {
            std::size_t t = 0;
            while (x >= centre[t + 1]) ++t;
            blend = {t, t + 1, (x - centre[t]) / (centre[t + 1] - centre[t])};
        }
    }
    return out;
}

} // namespace

void PreprocessConfig::validate() const {
    if (!(clip_lo < clip_hi)) throw Error(ErrorKind::InvalidConfig, "clip_lo must be below clip_hi");
    if (!(rescale_factor > 0.0 && rescale_factor <= 1.0)) {
        throw Error(ErrorKind::InvalidConfig, "rescale_factor must lie in (0, 1]");
    }
    if (!(clahe_clip_limit > 0.0)) throw Error(ErrorKind::InvalidConfig, "clahe_clip_limit must be positive");
    if (clahe_tiles_x == 0 || clahe_tiles_y == 0) throw Error(ErrorKind::InvalidConfig, "clahe_tiles must be positive");
    if (clahe_bins < 2) throw Error(ErrorKind::InvalidConfig, "clahe_bins must be at least 2");
    if (slab_size == 0 || slab_size % 2 == 0) throw Error(ErrorKind::InvalidConfig, "slab_size must be odd");
}

PreprocessConfig PreprocessConfig::from(const KeyValueConfig &kv) {
    kv.require_known({"clip_lo", "clip_hi", "rescale_factor", "clahe_clip_limit", "clahe_tiles", "clahe_bins",
                      "slab_size", "target_orientation"});
    PreprocessConfig cfg;
    if (auto v = kv.get_double("clip_lo")) cfg.clip_lo = *v;
    if (auto v = kv.get_double("clip_hi")) cfg.clip_hi = *v;
    if (auto v = kv.get_double("rescale_factor")) cfg.rescale_factor = *v;
    if (auto s = kv.get_string("clahe_clip_limit")) {
        cfg.clahe_clip_limit = (*s == "inf" || *s == "none") ? std::numeric_limits<double>::infinity()
                                                             : *kv.get_double("clahe_clip_limit");
    }
    if (auto s = kv.get_string("clahe_tiles")) {
        const auto x = s->find_first_of("x,");
        KeyValueConfig parts;
        parts.set("a", s->substr(0, x));
        parts.set("b", x == std::string::npos ? *s : s->substr(x + 1));
        const auto a = *parts.get_int("a");
        const auto b = *parts.get_int("b");
        if (a <= 0 || b <= 0) throw Error(ErrorKind::InvalidConfig, "clahe_tiles must be positive");
        cfg.clahe_tiles_x = static_cast<std::size_t>(a);
        cfg.clahe_tiles_y = static_cast<std::size_t>(b);
    }
    if (auto v = kv.get_int("clahe_bins")) {
        if (*v < 2) throw Error(ErrorKind::InvalidConfig, "clahe_bins must be at least 2");
        cfg.clahe_bins = static_cast<std::size_t>(*v);
    }
    if (auto v = kv.get_int("slab_size")) {
        if (*v <= 0) throw Error(ErrorKind::InvalidConfig, "slab_size must be positive");
        cfg.slab_size = static_cast<std::size_t>(*v);
    }
    if (auto s = kv.get_string("target_orientation")) cfg.target_orientation = Orientation::parse(*s);
    cfg.validate();
    return cfg;
}

Volume reorient(const Volume &v, const Orientation &target) { return reorient_grid(v, target); }
LabelVolume reorient(const LabelVolume &v, const Orientation &target) { return reorient_grid(v, target); }

Volume rescale(const Volume &v, double factor) {
    validate(v);
    const Dims dims = rescaled_dims(v.dims, factor);
    if (dims == v.dims) {
        Volume same = v;
        return same;
    }
    const auto sx = axis_samples(v.dims[0], dims[0]);
    const auto sy = axis_samples(v.dims[1], dims[1]);
    const auto sz = axis_samples(v.dims[2], dims[2]);
    Volume out(dims, {v.spacing[0] / factor, v.spacing[1] / factor, v.spacing[2] / factor}, v.orientation);
    for (std::size_t z = 0; z < dims[2]; ++z) {
        const auto &cz = sz[z];
        for (std::size_t y = 0; y < dims[1]; ++y) {
            const auto &cy = sy[y];
            for (std::size_t x = 0; x < dims[0]; ++x) {
                const auto &cx = sx[x];
                auto row = [&](std::size_t yy, std::size_t zz) {
                    return lerp(v.at(cx.lo, yy, zz), v.at(cx.hi, yy, zz), cx.t);
                };
                const double c0 = lerp(row(cy.lo, cz.lo), row(cy.hi, cz.lo), cy.t);
                const double c1 = lerp(row(cy.lo, cz.hi), row(cy.hi, cz.hi), cy.t);
                out.at(x, y, z) = static_cast<float>(lerp(c0, c1, cz.t));
            }
        }
    }
    return out;
}

LabelVolume rescale(const LabelVolume &v, double factor) {
    validate(v);
    const Dims dims = rescaled_dims(v.dims, factor);
    if (dims == v.dims) {
        LabelVolume same = v;
        return same;
    }
    const auto sx = axis_samples(v.dims[0], dims[0]);
    const auto sy = axis_samples(v.dims[1], dims[1]);
    const auto sz = axis_samples(v.dims[2], dims[2]);
    LabelVolume out(dims, {v.spacing[0] / factor, v.spacing[1] / factor, v.spacing[2] / factor}, v.orientation);
    for (std::size_t z = 0; z < dims[2]; ++z) {
        for (std::size_t y = 0; y < dims[1]; ++y) {
            for (std::size_t x = 0; x < dims[0]; ++x) {
                out.at(x, y, z) = v.at(sx[x].nearest, sy[y].nearest, sz[z].nearest);
            }
        }
    }
    return out;
}

Volume clip(const Volume &v, double lo, double hi) {
    if (!(lo < hi)) throw Error(ErrorKind::InvalidConfig, "clip bounds must satisfy lo < hi");
    Volume out = v;
    const auto flo = static_cast<float>(lo);
    const auto fhi = static_cast<float>(hi);
    for (auto &x : out.data) {
        x = std::isnan(x) ? flo : std::clamp(x, flo, fhi);
    }
    return out;
}

Volume standardize_range(const Volume &v, double lo, double hi) {
    if (!(lo < hi)) throw Error(ErrorKind::InvalidConfig, "range bounds must satisfy lo < hi");
    Volume out = v;
    const double width = hi - lo;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        const double x = out.data[i];
        if (!(x >= lo && x <= hi)) {
            throw Error(ErrorKind::RangeViolation,
                        "voxel " + std::to_string(i) + " = " + std::to_string(x) + " lies outside the clip window");
        }
        out.data[i] = static_cast<float>((x - lo) / width);
    }
    return out;
}

Volume clahe(const Volume &v, const PreprocessConfig &cfg) {
    validate(v);
    const std::size_t nx = v.dims[0];
    const std::size_t ny = v.dims[1];
    const std::size_t tx = cfg.clahe_tiles_x;
    const std::size_t ty = cfg.clahe_tiles_y;
    if (tx == 0 || ty == 0 || cfg.clahe_bins < 2 || !(cfg.clahe_clip_limit > 0.0)) {
        throw Error(ErrorKind::InvalidConfig, "invalid CLAHE parameters");
    }
    if (tx > nx || ty > ny) {
        throw Error(ErrorKind::TileLargerThanSlice, std::to_string(tx) + "x" + std::to_string(ty) +
                                                         " tiles do not fit a " + std::to_string(nx) + "x" +
                                                         std::to_string(ny) + " slice");
    }
    for (std::size_t i = 0; i < v.data.size(); ++i) {
        if (!(v.data[i] >= 0.0f && v.data[i] <= 1.0f)) {
            throw Error(ErrorKind::RangeViolation, "CLAHE input voxel " + std::to_string(i) + " outside [0, 1]");
        }
    }

    const auto bx = tile_blends(nx, tx);
    const auto by = tile_blends(ny, ty);
    Volume out = v;
    std::vector<TileMap> maps(tx * ty);
    for (std::size_t z = 0; z < v.dims[2]; ++z) {
        const float *slice = v.data.data() + z * v.slice_size();
        for (std::size_t j = 0; j < ty; ++j) {
            for (std::size_t i = 0; i < tx; ++i) {
                maps[i + tx * j] = equalization_map(slice, nx, i * nx / tx, (i + 1) * nx / tx, j * ny / ty,
                                                    (j + 1) * ny / ty, cfg);
            }
        }
        float *dst = out.data.data() + z * out.slice_size();
        for (std::size_t y = 0; y < ny; ++y) {
            const auto &wy = by[y];
            for (std::size_t x = 0; x < nx; ++x) {
                const auto &wx = bx[x];
                const float value = slice[x + nx * y];
                auto sample = [&](std::size_t ti, std::size_t tj) {
                    return static_cast<double>(apply_map(maps[ti + tx * tj], value, cfg.clahe_bins));
                };
                const double top = lerp(sample(wx.a, wy.a), sample(wx.b, wy.a), wx.w);
                const double bottom = lerp(sample(wx.a, wy.b), sample(wx.b, wy.b), wx.w);
                dst[x + nx * y] = static_cast<float>(std::clamp(lerp(top, bottom, wy.w), 0.0, 1.0));
            }
        }
    }
    return out;
}

Volume normalize(const Volume &v) {
    validate(v);
    const auto n = static_cast<double>(v.data.size());
    double sum = 0.0;
    for (float x : v.data) sum += x;
    const double mean = sum / n;
    double sq = 0.0;
    for (float x : v.data) {
        const double d = x - mean;
        sq += d * d;
    }
    const double sigma = std::sqrt(sq / n);
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
        throw Error(ErrorKind::ConstantVolume, "standard deviation is " + std::to_string(sigma));
    }
    Volume out = v;
    for (auto &x : out.data) {
        x = static_cast<float>((x - mean) / sigma);
    }
    return out;
}

std::vector<Slab> to_slabs(const Volume &v, std::size_t slab_size, const std::string &record_id) {
    validate(v);
    if (slab_size == 0 || slab_size % 2 == 0) {
        throw Error(ErrorKind::InvalidConfig, "slab_size must be odd, got " + std::to_string(slab_size));
    }
    const std::size_t nz = v.dims[2];
    const std::size_t plane = v.slice_size();
    const auto half = static_cast<std::ptrdiff_t>(slab_size / 2);
    std::vector<Slab> slabs;
    slabs.reserve(nz);
    for (std::size_t z = 0; z < nz; ++z) {
        Slab s;
        s.record_id = record_id;
        s.center_index = z;
        s.nx = v.dims[0];
        s.ny = v.dims[1];
        s.planes.reserve(slab_size * plane);
        for (std::ptrdiff_t k = -half; k <= half; ++k) {
            const auto src = static_cast<std::size_t>(
                std::clamp(static_cast<std::ptrdiff_t>(z) + k, std::ptrdiff_t{0}, static_cast<std::ptrdiff_t>(nz) - 1));
            s.source_indices.push_back(src);
            const auto first = v.data.begin() + static_cast<std::ptrdiff_t>(src * plane);
            s.planes.insert(s.planes.end(), first, first + static_cast<std::ptrdiff_t>(plane));
        }
        slabs.push_back(std::move(s));
    }
    return slabs;
}

PipelineResult run_pipeline(const Volume &v, const LabelVolume &mask, const PreprocessConfig &cfg,
                            const std::string &record_id) {
    cfg.validate();
    validate(v);
    validate(mask);
    if (!v.same_geometry(mask)) {
        throw Error(ErrorKind::ShapeMismatch, "image and mask geometry differ");
    }
    Volume img = reorient(v, cfg.target_orientation);
    img = rescale(img, cfg.rescale_factor);
    img = clip(img, cfg.clip_lo, cfg.clip_hi);
    img = standardize_range(img, cfg.clip_lo, cfg.clip_hi);
    img = clahe(img, cfg);
    img = normalize(img);

    PipelineResult result;
    result.slabs = to_slabs(img, cfg.slab_size, record_id);
    result.mask = rescale(reorient(mask, cfg.target_orientation), cfg.rescale_factor);
    return result;
}

void write_slabs(const std::vector<Slab> &slabs, const std::filesystem::path &dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error(ErrorKind::IoFailure, "cannot create '" + dir.string() + "': " + ec.message());

    std::ofstream manifest(dir / "manifest.csv", std::ios::trunc);
    if (!manifest) throw Error(ErrorKind::IoFailure, "cannot write manifest in '" + dir.string() + "'");
    manifest << "record_id,center_index,nx,ny,depth,file\n";
    for (const auto &s : slabs) {
        std::string index = std::to_string(s.center_index);
        index.insert(0, index.size() < 4 ? 4 - index.size() : 0, '0');
        const std::string name = (s.record_id.empty() ? std::string("slab") : s.record_id) + "_" + index + ".f32";
        std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
        out.write(reinterpret_cast<const char *>(s.planes.data()),
                  static_cast<std::streamsize>(s.planes.size() * sizeof(float)));
        if (!out) throw Error(ErrorKind::IoFailure, "write failed for '" + (dir / name).string() + "'");
        manifest << s.record_id << ',' << s.center_index << ',' << s.nx << ',' << s.ny << ',' << s.depth() << ','
                 << name << '\n';
    }
    if (!manifest) throw Error(ErrorKind::IoFailure, "manifest write failed");
}

} // namespace livseg

#include "livseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "livseg/format.hpp"

namespace livseg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_same_geometry(const LabelVolume &a, const LabelVolume &b) {
    validate(a);
    validate(b);
    if (!a.same_geometry(b)) {
        throw Error(ErrorKind::ShapeMismatch, "masks differ in dims, spacing or orientation");
    }
}

struct OverlapCounts {
    std::size_t pred = 0;
    std::size_t gt = 0;
    std::size_t both = 0;
};

OverlapCounts count_overlap(const LabelVolume &pred, const LabelVolume &gt) {
    require_same_geometry(pred, gt);
    OverlapCounts c;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const bool p = pred.data[i] != 0;
        const bool g = gt.data[i] != 0;
        c.pred += p;
        c.gt += g;
        c.both += p && g;
    }
    return c;
}

double dice_of(const OverlapCounts &c) {
    if (c.pred + c.gt == 0) return 100.0;
    return 200.0 * static_cast<double>(c.both) / static_cast<double>(c.pred + c.gt);
}

double iou_of(const OverlapCounts &c) {
    const std::size_t uni = c.pred + c.gt - c.both;
    if (uni == 0) return 100.0;
    return 100.0 * static_cast<double>(c.both) / static_cast<double>(uni);
}

double rvd_of(const OverlapCounts &c) {
    return (static_cast<double>(c.pred) - static_cast<double>(c.gt)) / static_cast<double>(c.gt);
}

// Lower envelope of parabolas (Felzenszwalb & Huttenlocher) along one line of
// `n` samples `stride` apart, sample positions i * h. `f` holds squared
// distances (kInf for "no site"); results are written back in place.
class LineTransform {
public:
    void run(double *f, std::size_t n, std::size_t stride, double h) {
        sites_.resize(n);
        bounds_.resize(n + 1);
        vals_.resize(n);
        for (std::size_t i = 0; i < n; ++i) vals_[i] = f[i * stride];

        std::size_t k = 0;
        bool any = false;
        for (std::size_t q = 0; q < n; ++q) {
            if (vals_[q] == kInf) continue;
            const double pq = static_cast<double>(q) * h;
            if (!any) {
                sites_[0] = q;
                bounds_[0] = -kInf;
                bounds_[1] = kInf;
                any = true;
                continue;
            }
            auto intersect = [&](std::size_t v) {
                const double pv = static_cast<double>(v) * h;
                return ((vals_[q] + pq * pq) - (vals_[v] + pv * pv)) / (2.0 * (pq - pv));
            };
            double s = intersect(sites_[k]);
            while (s <= bounds_[k]) { // bounds_[0] = -inf stops this at k = 0
                --k;
                s = intersect(sites_[k]);
            }
            ++k;
            sites_[k] = q;
            bounds_[k] = s;
            bounds_[k + 1] = kInf;
        }
        if (!any) return; // whole line stays at kInf

        std::size_t j = 0;
        for (std::size_t q = 0; q < n; ++q) {
            const double pq = static_cast<double>(q) * h;
            while (bounds_[j + 1] < pq) ++j;
            const std::size_t v = sites_[j];
            const double d = pq - static_cast<double>(v) * h;
            f[q * stride] = d * d + vals_[v];
        }
    }

private:
    std::vector<std::size_t> sites_;
    std::vector<double> bounds_;
    std::vector<double> vals_;
};

// Squared distance (mm^2) from every voxel of a box to the nearest site.
std::vector<double> squared_distance_map(const std::vector<VoxelIndex> &sites, const VoxelIndex &lo, const Dims &box,
                                         const Spacing &spacing) {
    std::vector<double> f(box[0] * box[1] * box[2], kInf);
    for (const auto &s : sites) {
        f[(s[0] - lo[0]) + box[0] * ((s[1] - lo[1]) + box[1] * (s[2] - lo[2]))] = 0.0;
    }
    LineTransform line;
    const std::size_t sx = 1;
    const std::size_t sy = box[0];
    const std::size_t sz = box[0] * box[1];
    for (std::size_t z = 0; z < box[2]; ++z)
        for (std::size_t y = 0; y < box[1]; ++y) line.run(&f[y * sy + z * sz], box[0], sx, spacing[0]);
    for (std::size_t z = 0; z < box[2]; ++z)
        for (std::size_t x = 0; x < box[0]; ++x) line.run(&f[x + z * sz], box[1], sy, spacing[1]);
    for (std::size_t y = 0; y < box[1]; ++y)
        for (std::size_t x = 0; x < box[0]; ++x) line.run(&f[x + y * sy], box[2], sz, spacing[2]);
    return f;
}

std::vector<double> pooled(const SurfaceDistanceBag &bag) {
    if (bag.pred_to_gt.empty() || bag.gt_to_pred.empty()) {
        throw Error(ErrorKind::EmptyBag, "both directions need at least one distance");
    }
    std::vector<double> all;
    all.reserve(bag.pred_to_gt.size() + bag.gt_to_pred.size());
    all.insert(all.end(), bag.pred_to_gt.begin(), bag.pred_to_gt.end());
    all.insert(all.end(), bag.gt_to_pred.begin(), bag.gt_to_pred.end());
    return all;
}

std::string optional_field(const std::optional<double> &v) { return v ? format_shortest(*v) : std::string("NA"); }

} // namespace

double dice(const LabelVolume &pred, const LabelVolume &gt) { return dice_of(count_overlap(pred, gt)); }

double iou(const LabelVolume &pred, const LabelVolume &gt) { return iou_of(count_overlap(pred, gt)); }

double rvd(const LabelVolume &pred, const LabelVolume &gt) {
    const auto c = count_overlap(pred, gt);
    if (c.gt == 0) throw Error(ErrorKind::EmptyGroundTruth, "relative volume difference needs a nonempty reference");
    return rvd_of(c);
}

std::vector<VoxelIndex> extract_surface(const LabelVolume &mask) {
    validate(mask);
    const auto [nx, ny, nz] = mask.dims;
    std::vector<VoxelIndex> out;
    for (std::size_t z = 0; z < nz; ++z) {
        for (std::size_t y = 0; y < ny; ++y) {
            for (std::size_t x = 0; x < nx; ++x) {
                if (mask.at(x, y, z) == 0) continue;
                const bool boundary = x == 0 || y == 0 || z == 0 || x + 1 == nx || y + 1 == ny || z + 1 == nz ||
                                      mask.at(x - 1, y, z) == 0 || mask.at(x + 1, y, z) == 0 ||
                                      mask.at(x, y - 1, z) == 0 || mask.at(x, y + 1, z) == 0 ||
                                      mask.at(x, y, z - 1) == 0 || mask.at(x, y, z + 1) == 0;
                if (boundary) out.push_back({x, y, z});
            }
        }
    }
    return out;
}

SurfaceDistanceBag surface_distances(const LabelVolume &pred, const LabelVolume &gt) {
    require_same_geometry(pred, gt);
    const auto pred_surface = extract_surface(pred);
    const auto gt_surface = extract_surface(gt);
    if (pred_surface.empty() || gt_surface.empty()) {
        throw Error(ErrorKind::EmptyMask, pred_surface.empty() ? "prediction is empty" : "ground truth is empty");
    }

    // Every query point and every site lies inside the joint bounding box, so
    // the transforms only need to cover it.
    VoxelIndex lo{pred.dims[0], pred.dims[1], pred.dims[2]};
    VoxelIndex hi{0, 0, 0};
    for (const auto *surface : {&pred_surface, &gt_surface}) {
        for (const auto &p : *surface) {
            for (std::size_t a = 0; a < 3; ++a) {
                lo[a] = std::min(lo[a], p[a]);
                hi[a] = std::max(hi[a], p[a]);
            }
        }
    }
    const Dims box{hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1};
    auto lookup = [&](const std::vector<double> &map, const VoxelIndex &p) {
        return std::sqrt(map[(p[0] - lo[0]) + box[0] * ((p[1] - lo[1]) + box[1] * (p[2] - lo[2]))]);
    };

    SurfaceDistanceBag bag;
    {
        const auto to_gt = squared_distance_map(gt_surface, lo, box, pred.spacing);
        bag.pred_to_gt.reserve(pred_surface.size());
        for (const auto &p : pred_surface) bag.pred_to_gt.push_back(lookup(to_gt, p));
    }
    {
        const auto to_pred = squared_distance_map(pred_surface, lo, box, pred.spacing);
        bag.gt_to_pred.reserve(gt_surface.size());
        for (const auto &p : gt_surface) bag.gt_to_pred.push_back(lookup(to_pred, p));
    }
    return bag;
}

double asd(const SurfaceDistanceBag &bag) {
    const auto all = pooled(bag);
    long double sum = 0.0L;
    for (double d : all) sum += d;
    const auto mean = static_cast<double>(sum / static_cast<long double>(all.size()));
    // The exact mean never exceeds the maximum; keep rounding from saying otherwise.
    return std::min(mean, *std::max_element(all.begin(), all.end()));
}

double rmsd(const SurfaceDistanceBag &bag) {
    const auto all = pooled(bag);
    long double sum = 0.0L;
    long double sum_sq = 0.0L;
    for (double d : all) {
        sum += d;
        sum_sq += static_cast<long double>(d) * d;
    }
    const auto n = static_cast<long double>(all.size());
    const auto root = static_cast<double>(std::sqrt(sum_sq / n));
    // Power-mean ordering mean <= rms <= max holds exactly; clamp rounding noise.
    const double mean = static_cast<double>(sum / n);
    const double max = *std::max_element(all.begin(), all.end());
    return std::clamp(root, std::min(mean, max), max);
}

double msd(const SurfaceDistanceBag &bag) {
    const auto all = pooled(bag);
    return *std::max_element(all.begin(), all.end());
}

double hd95(const SurfaceDistanceBag &bag) {
    auto all = pooled(bag);
    std::sort(all.begin(), all.end());
    const double pos = 0.95 * static_cast<double>(all.size() - 1);
    const auto below = static_cast<std::size_t>(std::floor(pos));
    const std::size_t above = std::min(below + 1, all.size() - 1);
    return std::lerp(all[below], all[above], pos - static_cast<double>(below));
}

double bce(const Volume &prob, const LabelVolume &target) {
    validate(prob);
    validate(target);
    if (prob.dims != target.dims) {
        throw Error(ErrorKind::ShapeMismatch, "probability and target volumes differ in dims");
    }
    long double total = 0.0L;
    for (std::size_t i = 0; i < prob.data.size(); ++i) {
        const double p = std::clamp(static_cast<double>(prob.data[i]), kBceEpsilon, 1.0 - kBceEpsilon);
        total += target.data[i] != 0 ? -std::log(p) : -std::log1p(-p);
    }
    return static_cast<double>(total / static_cast<long double>(prob.data.size()));
}

MetricReport evaluate_case(const LabelVolume &pred, const LabelVolume &gt, std::string record_id) {
    const auto c = count_overlap(pred, gt);
    MetricReport r;
    r.record_id = std::move(record_id);
    r.dice_pct = dice_of(c);
    r.iou_pct = iou_of(c);
    if (c.pred == 0 && c.gt == 0) {
        r.rvd = 0.0;
        r.asd_mm = r.rmsd_mm = r.msd_mm = r.hd95_mm = 0.0;
        return r;
    }
    if (c.gt != 0) r.rvd = rvd_of(c);
    if (c.pred == 0 || c.gt == 0) return r; // surface metrics undefined

    const auto bag = surface_distances(pred, gt);
    r.asd_mm = asd(bag);
    r.rmsd_mm = rmsd(bag);
    r.msd_mm = msd(bag);
    r.hd95_mm = hd95(bag);
    return r;
}

std::string_view metric_csv_header() { return "record_id,dice,iou,rvd,asd,rmsd,hd,hd95"; }

std::string to_csv_row(const MetricReport &r) {
    std::string row = r.record_id;
    for (const auto &field : {format_shortest(r.dice_pct), format_shortest(r.iou_pct), optional_field(r.rvd),
                              optional_field(r.asd_mm), optional_field(r.rmsd_mm), optional_field(r.msd_mm),
                              optional_field(r.hd95_mm)}) {
        row += ',';
        row += field;
    }
    return row;
}

MetricReport parse_csv_row(std::string_view line) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    const auto fields = split(line, ',');
    if (fields.size() != 8) {
        throw Error(ErrorKind::InvalidConfig, "metric row needs 8 fields, got " + std::to_string(fields.size()));
    }
    auto number = [&](std::size_t i) {
        const auto v = parse_double(fields[i]);
        if (!v) throw Error(ErrorKind::InvalidConfig, "bad number '" + std::string(fields[i]) + "'");
        return *v;
    };
    auto optional = [&](std::size_t i) -> std::optional<double> {
        if (fields[i] == "NA") return std::nullopt;
        return number(i);
    };
    MetricReport r;
    r.record_id = std::string(fields[0]);
    r.dice_pct = number(1);
    r.iou_pct = number(2);
    r.rvd = optional(3);
    r.asd_mm = optional(4);
    r.rmsd_mm = optional(5);
    r.msd_mm = optional(6);
    r.hd95_mm = optional(7);
    return r;
}

std::string to_json(const MetricReport &r) {
    auto opt = [](const std::optional<double> &v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    nlohmann::ordered_json j;
    j["record_id"] = r.record_id;
    j["dice"] = r.dice_pct;
    j["iou"] = r.iou_pct;
    j["rvd"] = opt(r.rvd);
    j["asd"] = opt(r.asd_mm);
    j["rmsd"] = opt(r.rmsd_mm);
    j["hd"] = opt(r.msd_mm);
    j["hd95"] = opt(r.hd95_mm);
    return j.dump();
}

} // namespace livseg

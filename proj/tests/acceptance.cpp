// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "livseg/experiment.hpp"
#include "livseg/mesh_export.hpp"
#include "livseg/metrics.hpp"
#include "livseg/preprocess.hpp"
#include "livseg/schedulers.hpp"
#include "livseg/volume_io.hpp"
#include "test_support.hpp"

using namespace livseg;
namespace ts = testsupport;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string &why) {
        if (!ok && pass) {
            pass = false;
            detail = why;
        }
    }
};

int failures = 0;

void criterion(const char *name, const std::function<Outcome()> &body) {
    Outcome o;
    try {
        o = body();
    } catch (const std::exception &e) {
        o.pass = false;
        o.detail = std::string("exception: ") + e.what();
    }
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << name;
    if (!o.detail.empty()) std::cout << "  [" << o.detail << "]";
    std::cout << std::endl;
}

std::string num(double v) {
    std::ostringstream s;
    s.precision(6);
    s << v;
    return s.str();
}

Outcome onecycle_peak() {
    Outcome o;
    const auto t0 = Clock::now();
    OneCycleConfig cfg;
    cfg.max_lr = 24e-5;
    cfg.total_epochs = 75;
    cfg.steps_per_epoch = 1;
    cfg.pct_start = 0.3;
    const auto t = simulate_schedule(cfg, {std::vector<double>(75, 1.0), {}}, std::nullopt);
    const double elapsed = seconds_since(t0);
    std::size_t peak_epoch = 0;
    double best = -1.0;
    for (const auto &row : t) {
        if (row.lr > best) {
            best = row.lr;
            peak_epoch = row.epoch;
        }
    }
    o.require(t.size() == 75, "trajectory length " + std::to_string(t.size()));
    o.require(peak_epoch == 22 || peak_epoch == 23, "peak at epoch " + std::to_string(peak_epoch));
    o.require(elapsed < 1.0, "runtime " + num(elapsed) + " s");
    if (o.pass) o.detail = "peak epoch " + std::to_string(peak_epoch) + ", " + num(elapsed * 1e3) + " ms";
    return o;
}

Outcome onecycle_endpoints() {
    Outcome o;
    double worst = 0.0;
    for (double max_lr : {1e-5, 8e-5, 16e-5, 24e-5, 1e-3, 0.1}) {
        for (Anneal a : {Anneal::Cosine, Anneal::Linear}) {
            OneCycleConfig cfg;
            cfg.max_lr = max_lr;
            cfg.anneal = a;
            const double first = one_cycle_lr_at(cfg, 0);
            const double last = one_cycle_lr_at(cfg, cfg.total_steps() - 1);
            const double want_first = max_lr / cfg.div_factor;
            const double want_last = max_lr / (cfg.div_factor * cfg.final_div_factor);
            worst = std::max(worst, std::abs(first - want_first) / want_first);
            worst = std::max(worst, std::abs(last - want_last) / want_last);
        }
    }
    o.require(worst <= 1e-12, "max relative error " + num(worst));
    if (o.pass) o.detail = "max relative error " + num(worst);
    return o;
}

Outcome plateau_law() {
    Outcome o;
    std::mt19937_64 rng(90210);
    std::size_t drops = 0;
    for (int trial = 0; trial < 2000 && o.pass; ++trial) {
        PlateauConfig cfg;
        cfg.initial_lr = std::array{16e-5, 8e-5, 1e-3}[rng() % 3];
        cfg.factor = std::array{0.1, 0.5, 0.2}[rng() % 3];
        cfg.epochs_patience = rng() % 6;
        cfg.threshold = std::array{0.0, 1e-4, 1e-3}[rng() % 3];
        PlateauScheduler p(cfg);
        ts::ReferencePlateau ref{cfg.initial_lr, cfg.factor, cfg.threshold, cfg.min_lr, cfg.epochs_patience};
        std::uniform_real_distribution<double> step(-0.03, 0.03);
        double loss = 1.0;
        double prev = cfg.initial_lr;
        for (int e = 0; e < 75; ++e) {
            loss = std::max(1e-4, loss + step(rng));
            if (rng() % 4 == 0) loss = std::round(loss * 20) / 20;
            const bool ref_dropped = ref.observe(loss);
            const double lr = p.observe(loss);
            o.require(lr <= prev, "LR increased");
            o.require(lr == ref.lr, "LR differs from reference at trial " + std::to_string(trial));
            o.require((lr < prev) == ref_dropped, "drop timing differs at trial " + std::to_string(trial));
            if (lr < prev) {
                o.require(lr == prev * cfg.factor, "drop is not an exact multiplication by factor");
                ++drops;
            }
            prev = lr;
        }
    }
    o.require(drops > 0, "no drops exercised");
    if (o.pass) o.detail = "2000 traces, " + std::to_string(drops) + " drops";
    return o;
}

Outcome early_stopping() {
    Outcome o;
    std::mt19937_64 rng(4242);
    std::size_t stopped = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + rng() % 75;
        std::vector<double> losses(n);
        double base = 1.0;
        for (auto &l : losses) {
            base *= 0.97 + 0.06 * static_cast<double>(rng() % 1000) / 1000.0;
            l = (rng() % 6 == 0) ? std::round(base * 50) / 50 : base;
        }
        const auto t = simulate_schedule(PlateauConfig{}, {losses, {}}, EarlyStopConfig{.epochs_stop = 6});

        std::optional<std::size_t> expect_epoch;
        double best = INFINITY;
        std::size_t run = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (losses[i] < best) {
                best = losses[i];
                run = 0;
            } else if (++run == 6) {
                expect_epoch = i + 1;
                break;
            }
        }
        const bool fired = !t.empty() && t.back().stopped;
        o.require(fired == expect_epoch.has_value(), "stop mismatch on trial " + std::to_string(trial));
        if (fired && expect_epoch) o.require(t.back().epoch == *expect_epoch, "stop epoch mismatch");
        if (!fired) o.require(t.size() == n, "truncated without stopping");
        stopped += fired;
    }
    if (o.pass) o.detail = "1000 traces, " + std::to_string(stopped) + " stopped";
    return o;
}

struct Pair {
    LabelVolume pred, gt;
};

std::vector<Pair> metric_corpus() {
    std::mt19937_64 rng(31337);
    std::vector<Pair> pairs;
    for (int i = 0; i < 200; ++i) {
        const Dims d{4 + rng() % 29, 4 + rng() % 29, 4 + rng() % 29};
        const Spacing s{0.5 + static_cast<double>(rng() % 8) * 0.125, 0.5 + static_cast<double>(rng() % 8) * 0.125,
                        1.0 + static_cast<double>(rng() % 5) * 0.5};
        pairs.push_back({ts::random_mask(rng, d, s), ts::random_mask(rng, d, s)});
    }
    return pairs;
}

Outcome metric_oracle(const std::vector<Pair> &pairs) {
    Outcome o;
    double lib_time = 0.0;
    double worst = 0.0;
    std::size_t surface_voxels = 0;
    const auto t_all = Clock::now();
    for (const auto &[p, g] : pairs) {
        const auto t0 = Clock::now();
        const auto r = evaluate_case(p, g);
        const auto bag = surface_distances(p, g);
        lib_time += seconds_since(t0);

        const auto c = ts::brute_counts(p, g);
        o.require(r.dice_pct == 200.0 * static_cast<double>(c.both) / static_cast<double>(c.pred + c.gt), "dice");
        o.require(r.iou_pct == 100.0 * static_cast<double>(c.both) / static_cast<double>(c.either), "iou");
        o.require(r.rvd && *r.rvd == (static_cast<double>(c.pred) - static_cast<double>(c.gt)) / static_cast<double>(c.gt),
                  "rvd");

        const auto b = ts::brute_distances(p, g);
        o.require(bag.pred_to_gt.size() == b.pred_to_gt.size() && bag.gt_to_pred.size() == b.gt_to_pred.size(),
                  "surface sizes differ");
        if (!o.pass) break;
        surface_voxels += b.pooled.size();
        for (std::size_t i = 0; i < b.pred_to_gt.size(); ++i)
            worst = std::max(worst, std::abs(bag.pred_to_gt[i] - b.pred_to_gt[i]));
        for (std::size_t i = 0; i < b.gt_to_pred.size(); ++i)
            worst = std::max(worst, std::abs(bag.gt_to_pred[i] - b.gt_to_pred[i]));
        worst = std::max({worst, std::abs(*r.asd_mm - b.asd), std::abs(*r.rmsd_mm - b.rmsd),
                          std::abs(*r.msd_mm - b.msd), std::abs(*r.hd95_mm - b.hd95)});
    }
    const double total = seconds_since(t_all);
    o.require(worst <= 1e-9, "max distance error " + num(worst) + " mm");
    o.require(total < 60.0, "runtime " + num(total) + " s");
    if (o.pass) {
        o.detail = "200 pairs, " + std::to_string(surface_voxels) + " surface voxels, max error " + num(worst) + " mm, library " + num(lib_time) + " s, with oracle " +
                   num(total) + " s";
    }
    return o;
}

Outcome metric_order(const std::vector<Pair> &pairs) {
    Outcome o;
    double worst = 0.0;
    for (const auto &[p, g] : pairs) {
        const auto r = evaluate_case(p, g);
        o.require(*r.asd_mm <= *r.rmsd_mm, "asd > rmsd");
        o.require(*r.rmsd_mm <= *r.msd_mm, "rmsd > msd");
        o.require(*r.hd95_mm <= *r.msd_mm, "hd95 > msd");
        const double f = r.iou_pct / 100.0;
        worst = std::max(worst, std::abs(r.dice_pct / 100.0 - 2.0 * f / (1.0 + f)));
    }
    o.require(worst <= 1e-12, "dice/iou identity off by " + num(worst));
    if (o.pass) o.detail = "identity error " + num(worst);
    return o;
}

Outcome preprocessing() {
    Outcome o;
    std::mt19937_64 rng(512);
    Volume v({512, 512, 100}, {0.75, 0.75, 2.0});
    std::normal_distribution<float> hu(60.0f, 400.0f);
    for (auto &x : v.data) x = hu(rng);
    v.data[0] = 3000.0f;
    v.data[1] = -1024.0f;
    LabelVolume mask({512, 512, 100}, v.spacing);
    for (std::size_t z = 20; z < 80; ++z)
        for (std::size_t y = 100; y < 400; ++y)
            for (std::size_t x = 120; x < 380; ++x) mask.at(x, y, z) = ((x / 40 + y / 50) % 5 == 0) ? 2 : 1;

    const PreprocessConfig cfg;
    const auto clipped = clip(v, cfg.clip_lo, cfg.clip_hi);
    const auto [lo_it, hi_it] = std::minmax_element(clipped.data.begin(), clipped.data.end());
    o.require(*lo_it >= -100.0f && *hi_it <= 400.0f, "clip range [" + num(*lo_it) + ", " + num(*hi_it) + "]");

    const auto normed = normalize(clipped);
    long double s = 0, sq = 0;
    for (float x : normed.data) s += x;
    const double mu = static_cast<double>(s / normed.data.size());
    for (float x : normed.data) sq += (x - mu) * (x - mu);
    const double sigma = std::sqrt(static_cast<double>(sq / normed.data.size()));
    o.require(std::abs(mu) < 1e-6, "mean " + num(mu));
    o.require(std::abs(sigma - 1.0) < 1e-6, "std " + num(sigma));

    const auto result = run_pipeline(v, mask, cfg, "acc");
    o.require(result.slabs.size() == 50, "slab count " + std::to_string(result.slabs.size()));
    for (const auto &slab : result.slabs) {
        o.require(slab.nx == 256 && slab.ny == 256 && slab.depth() == 5, "slab shape");
        o.require(slab.planes.size() == 256 * 256 * 5, "slab payload");
    }
    const std::set<std::uint8_t> before(mask.data.begin(), mask.data.end());
    const std::set<std::uint8_t> after(result.mask.data.begin(), result.mask.data.end());
    o.require(before == after, "mask label set changed");
    if (o.pass) o.detail = "mu " + num(mu) + ", sigma-1 " + num(sigma - 1.0) + ", 50 slabs of 256x256x5";
    return o;
}

Outcome nifti_round_trip() {
    Outcome o;
    ts::TempDir dir;
    std::mt19937_64 rng(77);
    const char *orientations[] = {"RAS", "LPS", "LAS", "RPI", "ASR", "SLP", "IRA"};
    int count = 0;
    for (int i = 0; i < 24; ++i) {
        const Dims d{1 + rng() % 17, 1 + rng() % 13, 1 + rng() % 9};
        const Spacing s{0.25 * static_cast<double>(1 + rng() % 12), 0.5 * static_cast<double>(1 + rng() % 6),
                        0.125 * static_cast<double>(1 + rng() % 40)};
        Volume v(d, s, Orientation::parse(orientations[i % 7]));
        std::normal_distribution<float> n(0.0f, 500.0f);
        for (auto &x : v.data) x = n(rng);
        if (i % 2 == 0) v.data[rng() % v.data.size()] = std::nanf("");
        if (i % 3 == 0) v.data[rng() % v.data.size()] = -std::nanf("");
        const auto path = dir / ("v" + std::to_string(i) + (i % 2 ? ".nii" : ".nii.gz"));
        write_volume(v, path);
        const auto back = read_volume(path);
        o.require(back.dims == v.dims, "dims differ for volume " + std::to_string(i));
        o.require(back.spacing == v.spacing, "spacing differs for volume " + std::to_string(i));
        o.require(back.orientation == v.orientation, "orientation differs for volume " + std::to_string(i));
        o.require(back.data.size() == v.data.size() &&
                      std::memcmp(back.data.data(), v.data.data(), v.data.size() * sizeof(float)) == 0,
                  "payload differs for volume " + std::to_string(i));
        ++count;
    }
    if (o.pass) o.detail = std::to_string(count) + " volumes bit-identical";
    return o;
}

bool watertight(const TriMesh &m) {
    const auto uses = ts::edge_use(m.triangles);
    return !uses.empty() && std::all_of(uses.begin(), uses.end(), [](const auto &kv) { return kv.second == 2; });
}

Outcome mesh() {
    Outcome o;
    LabelVolume one({3, 3, 3}, {1, 1, 1});
    one.at(1, 1, 1) = 1;
    const auto oct = marching_cubes(one, 1);
    o.require(oct.triangles.size() == 8 && oct.vertices.size() == 6, "single voxel mesh is not an octahedron");
    o.require(watertight(oct), "single voxel mesh is open");

    std::mt19937_64 rng(1999);
    std::size_t total_tris = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const Dims d{3 + rng() % 20, 3 + rng() % 20, 3 + rng() % 20};
        const auto m = ts::random_mask(rng, d, {1, 1, 1}, true);
        const auto tm = marching_cubes(m, 1);
        o.require(watertight(tm), "open mesh on trial " + std::to_string(trial));
        total_tris += tm.triangles.size();
    }

    ts::TempDir dir;
    auto labels = ts::random_mask(rng, {20, 18, 16}, {0.8, 0.8, 1.5});
    for (std::size_t i = 0; i < labels.data.size(); i += 7)
        if (labels.data[i]) labels.data[i] = 2;
    const std::vector<TriMesh> meshes{marching_cubes(labels, 1), marching_cubes(labels, 2)};
    export_obj(meshes, dir / "a.obj", dir / "s.mtl");
    const auto first = ts::slurp(dir / "a.obj");
    export_obj(meshes, dir / "a.obj", dir / "s.mtl");
    const auto second = ts::slurp(dir / "a.obj");
    o.require(first == second, "obj bytes differ between runs");
    const auto parsed = ts::parse_obj(first);
    o.require(parsed.ok, "obj does not parse");
    o.require(parsed.vertices == meshes[0].vertices.size() + meshes[1].vertices.size(), "vertex count differs");
    o.require(parsed.faces == meshes[0].triangles.size() + meshes[1].triangles.size(), "face count differs");
    if (o.pass) o.detail = "200 random solids closed (" + std::to_string(total_tris) + " triangles)";
    return o;
}

Outcome aggregation() {
    Outcome o;
    std::vector<MetricReport> folds;
    for (double d : {98.1, 98.1, 98.1, 98.1, 98.2}) {
        MetricReport r;
        r.dice_pct = d;
        r.iou_pct = 96.0;
        folds.push_back(r);
    }
    const auto cell = aggregate(folds, {}).cells()[0];
    o.require(cell == "98.12 (0.04)", "rendered '" + cell + "'");
    const std::vector<std::string> ids{"003", "012", "045", "072", "090", "105", "117", "129",
                                       "141", "153", "169", "178", "193", "205", "220", "236",
                                       "246", "258", "268", "280", "294", "304", "320"};
    o.require(test_record_ids() == ids, "held-out id list differs");
    if (o.pass) o.detail = "\"" + cell + "\", 23 ids";
    return o;
}

} // namespace

int main() {
    std::clog.setstate(std::ios::failbit); // silence mesh warnings
    criterion("OneCycle peak position", onecycle_peak);
    criterion("OneCycle endpoints", onecycle_endpoints);
    criterion("Plateau law", plateau_law);
    criterion("Early stopping", early_stopping);
    const auto pairs = metric_corpus();
    criterion("Metric oracle equivalence", [&] { return metric_oracle(pairs); });
    criterion("Metric order invariants", [&] { return metric_order(pairs); });
    criterion("Preprocessing", preprocessing);
    criterion("NIfTI round-trip", nifti_round_trip);
    criterion("Mesh", mesh);
    criterion("Aggregation formatting", aggregation);
    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
    return failures == 0 ? 0 : 1;
}

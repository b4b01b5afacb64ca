#include "livseg/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <cmath>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "livseg/config.hpp"
#include "livseg/experiment.hpp"
#include "livseg/format.hpp"
#include "livseg/mesh_export.hpp"
#include "livseg/metrics.hpp"
#include "livseg/parallel.hpp"
#include "livseg/preprocess.hpp"
#include "livseg/schedulers.hpp"
#include "livseg/volume_io.hpp"

namespace livseg::cli {

namespace {

namespace fs = std::filesystem;

std::string stem_of(const fs::path &p) {
    std::string name = p.filename().string();
    for (const char *suffix : {".nii.gz", ".nii", ".gz"}) {
        const std::string s(suffix);
        if (name.size() > s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0) {
            return name.substr(0, name.size() - s.size());
        }
    }
    return p.stem().string();
}

std::size_t default_jobs() {
    if (const char *env = std::getenv(kJobsEnvVar)) {
        const auto v = parse_double(env);
        if (v && *v >= 1.0) return static_cast<std::size_t>(*v);
    }
    return 1;
}

std::vector<std::string> read_id_list(const fs::path &path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::IoFailure, "cannot open '" + path.string() + "'");
    std::vector<std::string> ids;
    for (std::string line; std::getline(in, line);) {
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line.erase(0, line.find_first_not_of(" \t\r"));
        line.erase(line.find_last_not_of(" \t\r") + 1);
        if (!line.empty()) ids.push_back(canonical_record_id(line));
    }
    return ids;
}

// ---- preprocess -----------------------------------------------------------

struct PreprocessArgs {
    fs::path in, mask, out, config;
    std::string record_id;
    std::optional<double> clip_lo, clip_hi, rescale_factor, clahe_clip_limit;
    std::optional<std::string> clahe_tiles, orientation;
    std::optional<std::size_t> slab_size;
};

int do_preprocess(const PreprocessArgs &a, std::ostream &out, std::ostream &err) {
    KeyValueConfig kv = a.config.empty() ? KeyValueConfig{} : KeyValueConfig::load(a.config);
    if (a.clip_lo) kv.set("clip_lo", format_shortest(*a.clip_lo));
    if (a.clip_hi) kv.set("clip_hi", format_shortest(*a.clip_hi));
    if (a.rescale_factor) kv.set("rescale_factor", format_shortest(*a.rescale_factor));
    if (a.clahe_clip_limit) kv.set("clahe_clip_limit", format_shortest(*a.clahe_clip_limit));
    if (a.clahe_tiles) kv.set("clahe_tiles", *a.clahe_tiles);
    if (a.slab_size) kv.set("slab_size", std::to_string(*a.slab_size));
    if (a.orientation) kv.set("target_orientation", *a.orientation);
    const auto cfg = PreprocessConfig::from(kv);

    const std::string id = a.record_id.empty() ? stem_of(a.in) : a.record_id;
    const Volume image = read_volume(a.in);
    const LabelVolume mask = read_label_volume(a.mask);
    err << "preprocess: " << id << " " << image.dims[0] << "x" << image.dims[1] << "x" << image.dims[2] << "\n";
    const auto result = run_pipeline(image, mask, cfg, id);
    write_slabs(result.slabs, a.out);
    write_volume(result.mask, a.out / (id + "_mask.nii.gz"));

    const auto &first = result.slabs.front();
    out << "record_id,slabs,nx,ny,depth\n";
    out << id << ',' << result.slabs.size() << ',' << first.nx << ',' << first.ny << ',' << first.depth() << '\n';
    return kExitOk;
}

// ---- evaluate -------------------------------------------------------------

struct EvaluateArgs {
    fs::path pred, gt, pairs;
    std::string record_id;
    int label = 1;
    std::string format = "csv";
    std::optional<std::size_t> jobs;
};

struct CasePaths {
    std::string id;
    fs::path pred, gt;
};

int do_evaluate(const EvaluateArgs &a, std::ostream &out, std::ostream &err) {
    if (a.label < 1 || a.label > 255) throw Error(ErrorKind::InvalidConfig, "--label must be in [1, 255]");
    std::vector<CasePaths> cases;
    if (!a.pairs.empty()) {
        std::ifstream in(a.pairs);
        if (!in) throw Error(ErrorKind::IoFailure, "cannot open '" + a.pairs.string() + "'");
        for (std::string line; std::getline(in, line);) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty() || line.front() == '#') continue;
            const auto f = split(line, ',');
            if (f.size() != 3) throw Error(ErrorKind::InvalidConfig, "pairs lines need record_id,pred,gt");
            if (f[0] == "record_id") continue;
            const fs::path base = a.pairs.parent_path();
            cases.push_back({canonical_record_id(f[0]), base / std::string(f[1]), base / std::string(f[2])});
        }
    } else {
        if (a.pred.empty() || a.gt.empty()) {
            throw CLI::ValidationError("evaluate", "--pred and --gt are required without --pairs");
        }
        cases.push_back({a.record_id.empty() ? stem_of(a.pred) : a.record_id, a.pred, a.gt});
    }

    const auto label = static_cast<std::uint8_t>(a.label);
    std::vector<MetricReport> reports(cases.size());
    parallel_for(cases.size(), a.jobs.value_or(default_jobs()), [&](std::size_t i) {
        const auto pred = binarize(read_label_volume(cases[i].pred), label);
        const auto gt = binarize(read_label_volume(cases[i].gt), label);
        reports[i] = evaluate_case(pred, gt, cases[i].id);
    });
    std::stable_sort(reports.begin(), reports.end(),
                     [](const MetricReport &x, const MetricReport &y) { return x.record_id < y.record_id; });
    err << "evaluate: " << reports.size() << " case(s)\n";

    if (a.format == "json") {
        out << "[";
        for (std::size_t i = 0; i < reports.size(); ++i) out << (i ? "," : "") << to_json(reports[i]);
        out << "]\n";
    } else {
        out << metric_csv_header() << '\n';
        for (const auto &r : reports) out << to_csv_row(r) << '\n';
    }
    return kExitOk;
}

// ---- schedule-sim ---------------------------------------------------------

struct ScheduleArgs {
    fs::path config, losses, out;
    std::optional<std::string> scheduler, anneal;
    std::optional<double> max_lr, pct_start, div_factor, final_div_factor, initial_lr, lr_factor, threshold, min_lr;
    std::optional<std::size_t> epochs, steps_per_epoch, epochs_patience, epochs_stop;
    bool no_early_stop = false;
};

int do_schedule(const ScheduleArgs &a, std::ostream &out, std::ostream &err) {
    KeyValueConfig kv = a.config.empty() ? KeyValueConfig{} : KeyValueConfig::load(a.config);
    kv.require_known({"scheduler", "max_lr", "total_epochs", "steps_per_epoch", "pct_start", "anneal", "div_factor",
                      "final_div_factor", "initial_lr", "lr_factor", "epochs_patience", "threshold", "min_lr",
                      "epochs_stop"});
    auto put = [&](const char *key, const auto &value) {
        if (!value) return;
        if constexpr (std::is_same_v<std::decay_t<decltype(*value)>, std::string>) {
            kv.set(key, *value);
        } else if constexpr (std::is_same_v<std::decay_t<decltype(*value)>, double>) {
            kv.set(key, format_shortest(*value));
        } else {
            kv.set(key, std::to_string(*value));
        }
    };
    put("scheduler", a.scheduler);
    put("anneal", a.anneal);
    put("max_lr", a.max_lr);
    put("pct_start", a.pct_start);
    put("div_factor", a.div_factor);
    put("final_div_factor", a.final_div_factor);
    put("initial_lr", a.initial_lr);
    put("lr_factor", a.lr_factor);
    put("threshold", a.threshold);
    put("min_lr", a.min_lr);
    put("total_epochs", a.epochs);
    put("steps_per_epoch", a.steps_per_epoch);
    put("epochs_patience", a.epochs_patience);
    put("epochs_stop", a.epochs_stop);

    const auto kind = kv.get_string("scheduler");
    if (!kind) throw CLI::ValidationError("--scheduler", "required (onecycle or plateau)");

    SchedulerConfig scheduler;
    std::size_t epochs = 75;
    if (*kind == "onecycle" || *kind == "one_cycle") {
        const auto cfg = one_cycle_config_from(kv);
        epochs = cfg.total_epochs;
        scheduler = cfg;
    } else if (*kind == "plateau") {
        if (auto v = kv.get_int("total_epochs"); v && *v > 0) epochs = static_cast<std::size_t>(*v);
        scheduler = plateau_config_from(kv);
    } else {
        throw CLI::ValidationError("--scheduler", "must be onecycle or plateau, got '" + *kind + "'");
    }

    std::optional<EarlyStopConfig> early;
    LossTrace trace;
    if (a.losses.empty()) {
        // Pure LR trajectory: a flat trace, no stopping signal.
        trace.val_loss.assign(epochs, 1.0);
        err << "schedule-sim: no --losses, simulating " << epochs << " flat epochs without early stopping\n";
    } else {
        trace = read_loss_trace(a.losses);
        if (!a.no_early_stop) {
            EarlyStopConfig es;
            if (auto v = kv.get_int("epochs_stop")) {
                if (*v <= 0) throw Error(ErrorKind::InvalidConfig, "epochs_stop must be positive");
                es.epochs_stop = static_cast<std::size_t>(*v);
            }
            early = es;
        }
    }

    const auto trajectory = simulate_schedule(scheduler, trace, early);
    if (a.out.empty()) {
        out << convergence_csv(trajectory);
    } else {
        write_convergence_log(trajectory, a.out);
        err << "schedule-sim: wrote " << trajectory.size() << " rows to " << a.out.string() << "\n";
    }
    return kExitOk;
}

// ---- splits ---------------------------------------------------------------

struct SplitArgs {
    fs::path ids, out;
    std::size_t k = 5;
    std::uint64_t seed = 0;
    bool exclude_test = false;
};

nlohmann::ordered_json fold_json(const FoldSpec &f) {
    nlohmann::ordered_json j;
    j["fold_index"] = f.fold_index;
    j["seed"] = f.seed;
    j["train_ids"] = f.train_ids;
    j["val_ids"] = f.val_ids;
    return j;
}

int do_splits(const SplitArgs &a, std::ostream &out, std::ostream &err) {
    auto ids = read_id_list(a.ids);
    if (a.exclude_test) {
        const auto &test = test_record_ids();
        const std::set<std::string> held_out(test.begin(), test.end());
        std::erase_if(ids, [&](const std::string &id) { return held_out.count(id) != 0; });
    }
    const auto folds = kfold_split(ids, a.k, a.seed);
    if (a.out.empty()) {
        nlohmann::ordered_json all = nlohmann::ordered_json::array();
        for (const auto &f : folds) all.push_back(fold_json(f));
        out << all.dump(2) << '\n';
        return kExitOk;
    }
    std::error_code ec;
    fs::create_directories(a.out, ec);
    if (ec) throw Error(ErrorKind::IoFailure, "cannot create '" + a.out.string() + "'");
    out << "fold,train,val,file\n";
    for (const auto &f : folds) {
        const auto name = "fold_" + std::to_string(f.fold_index) + ".json";
        std::ofstream file(a.out / name, std::ios::trunc);
        file << fold_json(f).dump(2) << '\n';
        if (!file) throw Error(ErrorKind::IoFailure, "write failed for '" + (a.out / name).string() + "'");
        out << f.fold_index << ',' << f.train_ids.size() << ',' << f.val_ids.size() << ',' << name << '\n';
    }
    err << "splits: " << ids.size() << " ids into " << folds.size() << " folds\n";
    return kExitOk;
}

// ---- mesh -----------------------------------------------------------------

struct MeshArgs {
    std::vector<fs::path> masks;
    fs::path out, mtl;
    std::vector<int> labels;
    std::vector<std::string> names;
    double level = 0.5;
};

int do_mesh(const MeshArgs &a, std::ostream &out, std::ostream &err) {
    std::vector<TriMesh> meshes;
    for (const auto &path : a.masks) {
        const auto mask = read_label_volume(path);
        std::vector<int> labels = a.labels;
        if (labels.empty()) {
            std::set<int> present;
            for (auto v : mask.data) {
                if (v != 0) present.insert(v);
            }
            labels.assign(present.begin(), present.end());
        }
        for (int label : labels) {
            if (label < 1 || label > 255) throw Error(ErrorKind::InvalidConfig, "labels must be in [1, 255]");
            meshes.push_back(marching_cubes(mask, static_cast<std::uint8_t>(label), a.level));
        }
    }
    if (!a.names.empty()) {
        if (a.names.size() != meshes.size()) {
            throw CLI::ValidationError("--names", "needs one name per emitted mesh (" + std::to_string(meshes.size()) + ")");
        }
        for (std::size_t i = 0; i < meshes.size(); ++i) meshes[i].material_name = a.names[i];
    }
    fs::path mtl = a.mtl;
    if (mtl.empty()) {
        mtl = a.out;
        mtl.replace_extension(".mtl");
    }
    export_obj(meshes, a.out, mtl);
    out << "material,label,vertices,triangles\n";
    for (const auto &m : meshes) {
        out << m.material_name << ',' << int(m.label) << ',' << m.vertices.size() << ',' << m.triangles.size() << '\n';
    }
    err << "mesh: wrote " << a.out.string() << " and " << mtl.string() << "\n";
    return kExitOk;
}

// ---- aggregate ------------------------------------------------------------

struct AggregateArgs {
    fs::path reports, epochs;
    std::size_t k = 5;
    std::string label = "run";
    std::string format = "text";
};

int do_aggregate(const AggregateArgs &a, std::ostream &out, std::ostream &err) {
    std::vector<fs::path> files;
    std::error_code ec;
    for (const auto &entry : fs::directory_iterator(a.reports, ec)) {
        const auto name = entry.path().filename().string();
        if (entry.is_regular_file() && name.rfind("fold", 0) == 0 && entry.path().extension() == ".csv") {
            files.push_back(entry.path());
        }
    }
    if (ec) throw Error(ErrorKind::IoFailure, "cannot list '" + a.reports.string() + "'");
    std::sort(files.begin(), files.end());

    std::vector<MetricReport> fold_means;
    for (const auto &file : files) {
        std::ifstream in(file);
        std::vector<MetricReport> rows;
        for (std::string line; std::getline(in, line);) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty() || line == metric_csv_header()) continue;
            rows.push_back(parse_csv_row(line));
        }
        fold_means.push_back(mean_report(rows, file.stem().string()));
    }

    std::vector<std::size_t> epochs;
    fs::path epochs_file = a.epochs.empty() ? a.reports / "epochs.txt" : a.epochs;
    if (fs::exists(epochs_file)) {
        for (const auto &token : read_id_list(epochs_file)) {
            const auto v = parse_double(token);
            if (!v || *v < 0 || *v != std::floor(*v)) {
                throw Error(ErrorKind::InvalidConfig, "bad epoch count '" + token + "'");
            }
            epochs.push_back(static_cast<std::size_t>(*v));
        }
    } else if (!a.epochs.empty()) {
        throw Error(ErrorKind::IoFailure, "cannot open '" + a.epochs.string() + "'");
    }

    const auto row = aggregate(fold_means, epochs, a.k);
    err << "aggregate: " << fold_means.size() << " folds\n";
    const auto cells = row.cells();
    if (a.format == "csv") {
        out << "setting,dice,iou,rvd,asd,rmsd,hd,hd95,epochs\n" << a.label;
        for (const auto &c : cells) out << ',' << c;
        out << '\n';
    } else if (a.format == "json") {
        nlohmann::ordered_json j;
        j["setting"] = a.label;
        const char *keys[] = {"dice", "iou", "rvd", "asd", "rmsd", "hd", "hd95", "epochs"};
        for (std::size_t i = 0; i < cells.size(); ++i) j[keys[i]] = cells[i];
        out << j.dump() << '\n';
    } else {
        const TableRow tr{a.label, row};
        out << render_table(std::span<const TableRow>(&tr, 1));
    }
    return kExitOk;
}

} // namespace

int run(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
    CLI::App app{"Liver CT segmentation toolkit: preprocessing, LR schedules, metrics, splits, meshes"};
    app.name(args.empty() ? "livseg" : fs::path(args.front()).filename().string());
    app.require_subcommand(1);
    int rc = kExitOk;

    PreprocessArgs pre;
    auto *pre_cmd = app.add_subcommand("preprocess", "Run the CT preprocessing pipeline and write 2.5D slabs");
    pre_cmd->add_option("--in", pre.in, "CT volume (.nii/.nii.gz)")->required();
    pre_cmd->add_option("--mask", pre.mask, "Label volume on the same grid")->required();
    pre_cmd->add_option("--out", pre.out, "Output directory")->required();
    pre_cmd->add_option("--config", pre.config, "key=value configuration file");
    pre_cmd->add_option("--record-id", pre.record_id, "Record id (defaults to the file stem)");
    pre_cmd->add_option("--clip-lo", pre.clip_lo, "Lower HU clip bound");
    pre_cmd->add_option("--clip-hi", pre.clip_hi, "Upper HU clip bound");
    pre_cmd->add_option("--rescale-factor", pre.rescale_factor, "Resampling factor in (0, 1]");
    pre_cmd->add_option("--clahe-clip-limit", pre.clahe_clip_limit, "CLAHE clip limit");
    pre_cmd->add_option("--clahe-tiles", pre.clahe_tiles, "CLAHE tile grid, e.g. 8x8");
    pre_cmd->add_option("--slab-size", pre.slab_size, "Slices per slab (odd)");
    pre_cmd->add_option("--orientation", pre.orientation, "Target orientation code, e.g. RAS");
    pre_cmd->callback([&] { rc = do_preprocess(pre, out, err); });

    EvaluateArgs ev;
    auto *ev_cmd = app.add_subcommand("evaluate", "Compute the per-case segmentation metrics");
    ev_cmd->add_option("--pred", ev.pred, "Predicted mask");
    ev_cmd->add_option("--gt", ev.gt, "Ground-truth mask");
    ev_cmd->add_option("--pairs", ev.pairs, "CSV of record_id,pred,gt for batch evaluation");
    ev_cmd->add_option("--record-id", ev.record_id, "Record id for a single pair");
    ev_cmd->add_option("--label", ev.label, "Foreground label value")->capture_default_str();
    ev_cmd->add_option("--format", ev.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
    ev_cmd->add_option("--jobs", ev.jobs, "Worker threads (default $LIVSEG_JOBS or 1)")->check(CLI::PositiveNumber);
    ev_cmd->callback([&] { rc = do_evaluate(ev, out, err); });

    ScheduleArgs sc;
    auto *sc_cmd = app.add_subcommand("schedule-sim", "Replay a loss trace through an LR scheduler");
    sc_cmd->add_option("--scheduler", sc.scheduler, "onecycle or plateau");
    sc_cmd->add_option("--config", sc.config, "key=value configuration file");
    sc_cmd->add_option("--losses", sc.losses, "CSV of val_loss or train_loss,val_loss per epoch");
    sc_cmd->add_option("--out", sc.out, "Trajectory CSV (default: stdout)");
    sc_cmd->add_option("--max-lr", sc.max_lr, "One-cycle peak LR");
    sc_cmd->add_option("--epochs", sc.epochs, "Planned epochs (max_epochs)");
    sc_cmd->add_option("--steps-per-epoch", sc.steps_per_epoch, "Scheduler steps per epoch");
    sc_cmd->add_option("--pct-start", sc.pct_start, "Warm-up fraction");
    sc_cmd->add_option("--anneal", sc.anneal, "cosine or linear");
    sc_cmd->add_option("--div-factor", sc.div_factor, "max_lr / initial LR");
    sc_cmd->add_option("--final-div-factor", sc.final_div_factor, "initial LR / final LR");
    sc_cmd->add_option("--initial-lr", sc.initial_lr, "Plateau starting LR");
    sc_cmd->add_option("--lr-factor", sc.lr_factor, "Plateau reduction factor");
    sc_cmd->add_option("--epochs-patience", sc.epochs_patience, "Plateau patience");
    sc_cmd->add_option("--threshold", sc.threshold, "Relative improvement threshold");
    sc_cmd->add_option("--min-lr", sc.min_lr, "Plateau LR floor");
    sc_cmd->add_option("--epochs-stop", sc.epochs_stop, "Early-stopping patience");
    sc_cmd->add_flag("--no-early-stop", sc.no_early_stop, "Disable early stopping");
    sc_cmd->callback([&] { rc = do_schedule(sc, out, err); });

    SplitArgs sp;
    auto *sp_cmd = app.add_subcommand("splits", "Write seeded k-fold cross-validation splits");
    sp_cmd->add_option("--ids", sp.ids, "File with one record id per line")->required();
    sp_cmd->add_option("--k", sp.k, "Number of folds")->capture_default_str();
    sp_cmd->add_option("--seed", sp.seed, "Shuffle seed")->capture_default_str();
    sp_cmd->add_option("--out", sp.out, "Directory for fold_<i>.json (default: JSON on stdout)");
    sp_cmd->add_flag("--exclude-test", sp.exclude_test, "Drop the 23 held-out test records first");
    sp_cmd->callback([&] { rc = do_splits(sp, out, err); });

    MeshArgs me;
    auto *me_cmd = app.add_subcommand("mesh", "Extract label surfaces into one .obj/.mtl pair");
    me_cmd->add_option("--mask", me.masks, "Label volume(s)")->required();
    me_cmd->add_option("--out", me.out, "Output .obj")->required();
    me_cmd->add_option("--mtl", me.mtl, "Output .mtl (default: next to the .obj)");
    me_cmd->add_option("--labels", me.labels, "Labels to mesh (default: all present)")->delimiter(',');
    me_cmd->add_option("--names", me.names, "Material names, one per mesh")->delimiter(',');
    me_cmd->add_option("--level", me.level, "Iso level in (0, 1)")->capture_default_str();
    me_cmd->callback([&] { rc = do_mesh(me, out, err); });

    AggregateArgs ag;
    auto *ag_cmd = app.add_subcommand("aggregate", "Mean (std) over per-fold metric reports");
    ag_cmd->add_option("--reports", ag.reports, "Directory of fold*.csv metric files")->required();
    ag_cmd->add_option("--epochs", ag.epochs, "Per-fold epoch counts (default: <reports>/epochs.txt)");
    ag_cmd->add_option("--k", ag.k, "Expected fold count")->capture_default_str();
    ag_cmd->add_option("--label", ag.label, "Row label");
    ag_cmd->add_option("--format", ag.format, "text, csv or json")->check(CLI::IsMember({"text", "csv", "json"}));
    ag_cmd->callback([&] { rc = do_aggregate(ag, out, err); });

    std::vector<const char *> argv;
    argv.reserve(args.size() + 1);
    if (args.empty()) argv.push_back("livseg");
    for (const auto &a : args) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp &) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp &) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError &e) {
        err << "usage error: " << e.what() << "\n" << "run with --help for usage\n";
        return kExitUsage;
    } catch (const Error &e) {
        err << "error: " << e.what() << "\n";
        return kExitDomainError;
    } catch (const std::exception &e) {
        err << "error: " << e.what() << "\n";
        return kExitDomainError;
    }
    return rc;
}

} // namespace livseg::cli

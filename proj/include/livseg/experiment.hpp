#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "livseg/metrics.hpp"
#include "livseg/schedulers.hpp"

namespace livseg {

struct FoldSpec {
    std::size_t fold_index = 0;
    std::vector<std::string> train_ids;
    std::vector<std::string> val_ids;
    std::uint64_t seed = 0;
};

// Shuffles the ids with a Fisher-Yates pass driven by std::mt19937_64(seed)
// (index j for position i drawn uniformly from [0, i] by rejection sampling on
// raw 64-bit outputs, so splits replicate on every platform), then cuts the
// shuffled order into k contiguous validation blocks whose sizes differ by at
// most one (the first n % k folds get the extra id). Training ids keep the
// input order. Throws TooFewRecords, InvalidConfig (k == 0, duplicate ids).
std::vector<FoldSpec> kfold_split(std::span<const std::string> ids, std::size_t k, std::uint64_t seed);

// The 23 held-out test records, in listing order.
const std::vector<std::string> &test_record_ids();

// Zero-pads numeric ids to three characters ("3" -> "003").
std::string canonical_record_id(std::string_view id);

// Mean of each metric over the records of one fold. Undefined entries are
// skipped; a metric with no defined entries stays undefined.
MetricReport mean_report(std::span<const MetricReport> reports, std::string label = {});

struct MeanStd {
    double mean = 0.0;
    double std = 0.0; // sample (n - 1) standard deviation; 0 for n == 1
};

struct AggregateRow {
    MeanStd dice, iou;
    std::optional<MeanStd> rvd, asd, rmsd, hd, hd95, epochs;

    // Cells in column order Dice, IoU, RVD, ASD, RMSD, HD, 95% HD, Epochs,
    // each "mean (std)" with 2 decimals except RVD and ASD (3) and Epochs (1).
    // Undefined cells render as "n/a".
    std::vector<std::string> cells() const;
};

MeanStd mean_std(std::span<const double> values);

// Aggregates per-fold means. `epochs` may be empty; otherwise it needs one
// entry per fold. Throws FoldCountMismatch when fold_means.size() != k or
// the epoch count disagrees.
AggregateRow aggregate(std::span<const MetricReport> fold_means, std::span<const std::size_t> epochs,
                       std::size_t k = 5);

struct TableRow {
    std::string label; // e.g. "ReduceLRonPlateau 16e-5"
    AggregateRow row;
};

// Plain-text rendering of aggregated rows under a fixed header.
std::string render_table(std::span<const TableRow> rows);

// CSV with header epoch,lr,train_loss,val_loss,stopped. Numbers are written
// in shortest round-trip form; an absent train loss is an empty field.
void write_convergence_log(const Trajectory &trajectory, const std::filesystem::path &path);
std::string convergence_csv(const Trajectory &trajectory);
Trajectory read_convergence_log(const std::filesystem::path &path);

// Loss trace CSV: one or two numeric columns per line (val_loss, or
// train_loss,val_loss). An optional header line that does not parse as
// numbers is skipped; blank lines are ignored.
LossTrace read_loss_trace(const std::filesystem::path &path);

} // namespace livseg

#include "livseg/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "livseg/format.hpp"

namespace livseg {

namespace {

std::size_t uniform_below(std::mt19937_64 &rng, std::size_t bound) {
    const std::uint64_t n = bound;
    const std::uint64_t reject_below = (0 - n) % n; // 2^64 mod n
    std::uint64_t r = rng();
    while (r < reject_below) r = rng();
    return static_cast<std::size_t>(r % n);
}

std::string cell(const MeanStd &m, int decimals) {
    return format_fixed(m.mean, decimals) + " (" + format_fixed(m.std, decimals) + ")";
}

std::string cell(const std::optional<MeanStd> &m, int decimals) { return m ? cell(*m, decimals) : "n/a"; }

std::optional<MeanStd> optional_mean_std(std::span<const MetricReport> folds,
                                         std::optional<double> MetricReport::*field) {
    std::vector<double> values;
    for (const auto &f : folds) {
        if (!(f.*field)) return std::nullopt;
        values.push_back(*(f.*field));
    }
    return mean_std(values);
}

std::ofstream open_for_write(const std::filesystem::path &path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoFailure, "cannot create '" + path.string() + "'");
    return out;
}

std::vector<std::string> read_lines(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::IoFailure, "cannot open '" + path.string() + "'");
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(std::move(line));
    }
    return lines;
}

} // namespace

std::vector<FoldSpec> kfold_split(std::span<const std::string> ids, std::size_t k, std::uint64_t seed) {
    if (k == 0) throw Error(ErrorKind::InvalidConfig, "k must be positive");
    if (ids.size() < k) {
        throw Error(ErrorKind::TooFewRecords,
                    std::to_string(ids.size()) + " records cannot fill " + std::to_string(k) + " folds");
    }
    if (std::set<std::string>(ids.begin(), ids.end()).size() != ids.size()) {
        throw Error(ErrorKind::InvalidConfig, "record ids must be unique");
    }

    std::vector<std::size_t> order(ids.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 rng(seed);
    for (std::size_t i = order.size(); i-- > 1;) {
        std::swap(order[i], order[uniform_below(rng, i + 1)]);
    }

    const std::size_t base = ids.size() / k;
    const std::size_t extra = ids.size() % k;
    std::vector<FoldSpec> folds(k);
    std::vector<std::size_t> fold_of(ids.size());
    std::size_t pos = 0;
    for (std::size_t f = 0; f < k; ++f) {
        const std::size_t size = base + (f < extra ? 1 : 0);
        folds[f].fold_index = f;
        folds[f].seed = seed;
        for (std::size_t i = 0; i < size; ++i, ++pos) {
            folds[f].val_ids.push_back(ids[order[pos]]);
            fold_of[order[pos]] = f;
        }
    }
    for (std::size_t f = 0; f < k; ++f) {
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (fold_of[i] != f) folds[f].train_ids.push_back(ids[i]);
        }
    }
    return folds;
}

const std::vector<std::string> &test_record_ids() {
    static const std::vector<std::string> ids{"003", "012", "045", "072", "090", "105", "117", "129",
                                              "141", "153", "169", "178", "193", "205", "220", "236",
                                              "246", "258", "268", "280", "294", "304", "320"};
    return ids;
}

std::string canonical_record_id(std::string_view id) {
    std::string out(id);
    const bool numeric = !out.empty() && std::all_of(out.begin(), out.end(), [](char c) { return c >= '0' && c <= '9'; });
    if (numeric && out.size() < 3) out.insert(0, 3 - out.size(), '0');
    return out;
}

MetricReport mean_report(std::span<const MetricReport> reports, std::string label) {
    MetricReport out;
    out.record_id = std::move(label);
    if (reports.empty()) return out;
    double dice_sum = 0.0;
    double iou_sum = 0.0;
    for (const auto &r : reports) {
        dice_sum += r.dice_pct;
        iou_sum += r.iou_pct;
    }
    out.dice_pct = dice_sum / static_cast<double>(reports.size());
    out.iou_pct = iou_sum / static_cast<double>(reports.size());
    auto average = [&](std::optional<double> MetricReport::*field) -> std::optional<double> {
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto &r : reports) {
            if (r.*field) {
                sum += *(r.*field);
                ++n;
            }
        }
        if (n == 0) return std::nullopt;
        return sum / static_cast<double>(n);
    };
    out.rvd = average(&MetricReport::rvd);
    out.asd_mm = average(&MetricReport::asd_mm);
    out.rmsd_mm = average(&MetricReport::rmsd_mm);
    out.msd_mm = average(&MetricReport::msd_mm);
    out.hd95_mm = average(&MetricReport::hd95_mm);
    return out;
}

MeanStd mean_std(std::span<const double> values) {
    MeanStd m;
    if (values.empty()) return m;
    // Sorting first makes the sums independent of fold order.
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    double sum = 0.0;
    for (double v : sorted) sum += v;
    m.mean = sum / static_cast<double>(sorted.size());
    if (sorted.size() > 1) {
        double sq = 0.0;
        for (double v : sorted) sq += (v - m.mean) * (v - m.mean);
        m.std = std::sqrt(sq / static_cast<double>(sorted.size() - 1));
    }
    return m;
}

std::vector<std::string> AggregateRow::cells() const {
    return {cell(dice, 2), cell(iou, 2),  cell(rvd, 3),  cell(asd, 3),
            cell(rmsd, 2), cell(hd, 2),   cell(hd95, 2), cell(epochs, 1)};
}

AggregateRow aggregate(std::span<const MetricReport> fold_means, std::span<const std::size_t> epochs, std::size_t k) {
    if (fold_means.size() != k) {
        throw Error(ErrorKind::FoldCountMismatch,
                    "expected " + std::to_string(k) + " folds, got " + std::to_string(fold_means.size()));
    }
    if (!epochs.empty() && epochs.size() != k) {
        throw Error(ErrorKind::FoldCountMismatch,
                    "expected " + std::to_string(k) + " epoch counts, got " + std::to_string(epochs.size()));
    }
    AggregateRow row;
    std::vector<double> dice_values;
    std::vector<double> iou_values;
    for (const auto &f : fold_means) {
        dice_values.push_back(f.dice_pct);
        iou_values.push_back(f.iou_pct);
    }
    row.dice = mean_std(dice_values);
    row.iou = mean_std(iou_values);
    row.rvd = optional_mean_std(fold_means, &MetricReport::rvd);
    row.asd = optional_mean_std(fold_means, &MetricReport::asd_mm);
    row.rmsd = optional_mean_std(fold_means, &MetricReport::rmsd_mm);
    row.hd = optional_mean_std(fold_means, &MetricReport::msd_mm);
    row.hd95 = optional_mean_std(fold_means, &MetricReport::hd95_mm);
    if (!epochs.empty()) {
        std::vector<double> e(epochs.begin(), epochs.end());
        row.epochs = mean_std(e);
    }
    return row;
}

std::string render_table(std::span<const TableRow> rows) {
    const std::vector<std::string> header{"Setting", "Dice", "IoU", "RVD", "ASD", "RMSD", "HD", "95% HD", "Epochs"};
    std::vector<std::vector<std::string>> grid{header};
    for (const auto &r : rows) {
        std::vector<std::string> line{r.label};
        for (auto &c : r.row.cells()) line.push_back(std::move(c));
        grid.push_back(std::move(line));
    }
    std::vector<std::size_t> width(header.size(), 0);
    for (const auto &line : grid)
        for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());

    std::ostringstream out;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        for (std::size_t c = 0; c < grid[i].size(); ++c) {
            if (c != 0) out << " | ";
            out << grid[i][c] << std::string(width[c] - grid[i][c].size(), ' ');
        }
        out << '\n';
        if (i == 0) {
            for (std::size_t c = 0; c < width.size(); ++c) {
                if (c != 0) out << "-+-";
                out << std::string(width[c], '-');
            }
            out << '\n';
        }
    }
    return out.str();
}

std::string convergence_csv(const Trajectory &trajectory) {
    std::string out = "epoch,lr,train_loss,val_loss,stopped\n";
    for (const auto &row : trajectory) {
        out += std::to_string(row.epoch);
        out += ',';
        out += format_shortest(row.lr);
        out += ',';
        if (row.train_loss) out += format_shortest(*row.train_loss);
        out += ',';
        out += format_shortest(row.val_loss);
        out += row.stopped ? ",1\n" : ",0\n";
    }
    return out;
}

void write_convergence_log(const Trajectory &trajectory, const std::filesystem::path &path) {
    auto out = open_for_write(path);
    out << convergence_csv(trajectory);
    if (!out) throw Error(ErrorKind::IoFailure, "write failed for '" + path.string() + "'");
}

Trajectory read_convergence_log(const std::filesystem::path &path) {
    const auto lines = read_lines(path);
    if (lines.empty() || lines.front() != "epoch,lr,train_loss,val_loss,stopped") {
        throw Error(ErrorKind::InvalidConfig, "'" + path.string() + "' lacks the convergence log header");
    }
    Trajectory rows;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        const auto f = split(lines[i], ',');
        auto bad = [&] { return Error(ErrorKind::InvalidConfig, "malformed log line " + std::to_string(i + 1)); };
        if (f.size() != 5) throw bad();
        TrajectoryRow row;
        const auto epoch = parse_double(f[0]);
        const auto lr = parse_double(f[1]);
        const auto val = parse_double(f[3]);
        if (!epoch || !lr || !val || (f[4] != "0" && f[4] != "1")) throw bad();
        row.epoch = static_cast<std::size_t>(*epoch);
        row.lr = *lr;
        if (!f[2].empty()) {
            const auto train = parse_double(f[2]);
            if (!train) throw bad();
            row.train_loss = *train;
        }
        row.val_loss = *val;
        row.stopped = f[4] == "1";
        rows.push_back(row);
    }
    return rows;
}

LossTrace read_loss_trace(const std::filesystem::path &path) {
    const auto lines = read_lines(path);
    LossTrace trace;
    std::size_t columns = 0;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].find_first_not_of(" \t") == std::string::npos) continue;
        const auto f = split(lines[i], ',');
        std::vector<double> values;
        for (auto field : f) {
            while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
            while (!field.empty() && (field.back() == ' ' || field.back() == '\t')) field.remove_suffix(1);
            if (const auto v = parse_double(field)) values.push_back(*v);
        }
        if (values.size() != f.size()) {
            if (trace.val_loss.empty() && columns == 0) continue; // header
            throw Error(ErrorKind::InvalidConfig, "non-numeric loss on line " + std::to_string(i + 1));
        }
        if (values.empty() || values.size() > 2 || (columns != 0 && values.size() != columns)) {
            throw Error(ErrorKind::InvalidConfig, "inconsistent column count on line " + std::to_string(i + 1));
        }
        columns = values.size();
        if (columns == 2) trace.train_loss.push_back(values[0]);
        trace.val_loss.push_back(values.back());
    }
    return trace;
}

} // namespace livseg

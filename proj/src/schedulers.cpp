#include "livseg/schedulers.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "livseg/error.hpp"

namespace livseg {

namespace {

double anneal(Anneal kind, double start, double end, double pct) {
    if (kind == Anneal::Linear) {
        return start + pct * (end - start);
    }
    return end + 0.5 * (start - end) * (std::cos(std::numbers::pi * pct) + 1.0);
}

void require_finite(double loss) {
    if (!std::isfinite(loss)) {
        throw Error(ErrorKind::NonFiniteLoss, "validation loss " + std::to_string(loss));
    }
}

} // namespace

void OneCycleConfig::validate() const {
    if (!(max_lr > 0.0) || !std::isfinite(max_lr)) throw Error(ErrorKind::InvalidConfig, "max_lr must be positive");
    if (total_epochs == 0 || steps_per_epoch == 0) {
        throw Error(ErrorKind::InvalidConfig, "total_epochs and steps_per_epoch must be positive");
    }
    if (!(pct_start > 0.0 && pct_start < 1.0)) throw Error(ErrorKind::InvalidConfig, "pct_start must lie in (0, 1)");
    if (!(div_factor > 1.0) || !(final_div_factor > 1.0)) {
        throw Error(ErrorKind::InvalidConfig, "div_factor and final_div_factor must exceed 1");
    }
    // Phase one must span at least part of a step past step 0, otherwise its
    // interpolation fraction is undefined.
    if (!(pct_start * static_cast<double>(total_steps()) - 1.0 > 0.0)) {
        throw Error(ErrorKind::InvalidConfig, "pct_start * total_steps must exceed 1");
    }
}

void PlateauConfig::validate() const {
    if (!(initial_lr > 0.0) || !std::isfinite(initial_lr)) {
        throw Error(ErrorKind::InvalidConfig, "initial_lr must be positive");
    }
    if (!(factor > 0.0 && factor < 1.0)) throw Error(ErrorKind::InvalidConfig, "lr factor must lie in (0, 1)");
    if (!(threshold >= 0.0)) throw Error(ErrorKind::InvalidConfig, "threshold must be nonnegative");
    if (!(min_lr >= 0.0 && min_lr < initial_lr)) {
        throw Error(ErrorKind::InvalidConfig, "min_lr must be nonnegative and below initial_lr");
    }
}

void EarlyStopConfig::validate() const {
    if (epochs_stop == 0) throw Error(ErrorKind::InvalidConfig, "epochs_stop must be at least 1");
}

double one_cycle_lr_at(const OneCycleConfig &cfg, std::size_t step) {
    cfg.validate();
    const std::size_t total = cfg.total_steps();
    if (step >= total) {
        throw Error(ErrorKind::StepOutOfRange,
                    "step " + std::to_string(step) + " is past the schedule of " + std::to_string(total) + " steps");
    }
    const double initial = cfg.initial_lr();
    const double floor_lr = cfg.final_lr();
    if (step == 0) return initial;
    if (step == total - 1) return floor_lr;

    const double s = static_cast<double>(step);
    const double warmup_end = cfg.pct_start * static_cast<double>(total) - 1.0;
    const double last = static_cast<double>(total - 1);
    if (s <= warmup_end) {
        return anneal(cfg.anneal, initial, cfg.max_lr, s / warmup_end);
    }
    return anneal(cfg.anneal, cfg.max_lr, floor_lr, (s - warmup_end) / (last - warmup_end));
}

OneCycleScheduler::OneCycleScheduler(OneCycleConfig cfg) : cfg_(cfg) { cfg_.validate(); }

double OneCycleScheduler::step() {
    if (step_ + 1 >= cfg_.total_steps()) {
        throw Error(ErrorKind::StepOutOfRange, "one-cycle schedule exhausted");
    }
    ++step_;
    return current_lr();
}

PlateauScheduler::PlateauScheduler(PlateauConfig cfg) : cfg_(cfg), lr_(cfg.initial_lr) { cfg_.validate(); }

double PlateauScheduler::observe(double val_loss) {
    require_finite(val_loss);
    ++observations_;
    if (!best_ || val_loss < *best_ * (1.0 - cfg_.threshold)) {
        best_ = val_loss;
        bad_epochs_ = 0;
    } else {
        ++bad_epochs_;
    }
    if (bad_epochs_ > cfg_.epochs_patience) {
        lr_ = std::max(lr_ * cfg_.factor, cfg_.min_lr);
        bad_epochs_ = 0;
    }
    return lr_;
}

EarlyStopping::EarlyStopping(EarlyStopConfig cfg) : cfg_(cfg) { cfg_.validate(); }

StopDecision EarlyStopping::observe(double val_loss) {
    require_finite(val_loss);
    if (stopped_) return StopDecision::Stop;
    if (!best_ || val_loss < *best_) {
        best_ = val_loss;
        counter_ = 0;
    } else {
        ++counter_;
    }
    if (counter_ >= cfg_.epochs_stop) stopped_ = true;
    return stopped_ ? StopDecision::Stop : StopDecision::Continue;
}

Trajectory simulate_schedule(const SchedulerConfig &scheduler, const LossTrace &trace,
                             const std::optional<EarlyStopConfig> &early) {
    if (!trace.train_loss.empty() && trace.train_loss.size() != trace.val_loss.size()) {
        throw Error(ErrorKind::InvalidConfig, "train and validation loss traces differ in length");
    }
    for (double loss : trace.val_loss) require_finite(loss);

    std::optional<EarlyStopping> stopper;
    if (early) stopper.emplace(*early);

    std::optional<PlateauScheduler> plateau;
    const OneCycleConfig *cycle = std::get_if<OneCycleConfig>(&scheduler);
    if (cycle) {
        cycle->validate();
        if (trace.val_loss.size() > cycle->total_epochs) {
            throw Error(ErrorKind::StepOutOfRange, "loss trace has " + std::to_string(trace.val_loss.size()) +
                                                       " epochs, schedule covers " +
                                                       std::to_string(cycle->total_epochs));
        }
    } else {
        plateau.emplace(std::get<PlateauConfig>(scheduler));
    }

    Trajectory rows;
    rows.reserve(trace.val_loss.size());
    for (std::size_t e = 0; e < trace.val_loss.size(); ++e) {
        TrajectoryRow row;
        row.epoch = e + 1;
        row.val_loss = trace.val_loss[e];
        if (!trace.train_loss.empty()) row.train_loss = trace.train_loss[e];
        if (cycle) {
            row.lr = one_cycle_lr_at(*cycle, e * cycle->steps_per_epoch);
        } else {
            row.lr = plateau->current_lr();
            plateau->observe(row.val_loss);
        }
        if (stopper && stopper->observe(row.val_loss) == StopDecision::Stop) {
            row.stopped = true;
            rows.push_back(row);
            break;
        }
        rows.push_back(row);
    }
    return rows;
}

OneCycleConfig one_cycle_config_from(const KeyValueConfig &kv, OneCycleConfig cfg) {
    if (auto v = kv.get_double("max_lr")) cfg.max_lr = *v;
    if (auto v = kv.get_int("total_epochs")) {
        if (*v <= 0) throw Error(ErrorKind::InvalidConfig, "total_epochs must be positive");
        cfg.total_epochs = static_cast<std::size_t>(*v);
    }
    if (auto v = kv.get_int("steps_per_epoch")) {
        if (*v <= 0) throw Error(ErrorKind::InvalidConfig, "steps_per_epoch must be positive");
        cfg.steps_per_epoch = static_cast<std::size_t>(*v);
    }
    if (auto v = kv.get_double("pct_start")) cfg.pct_start = *v;
    if (auto s = kv.get_string("anneal")) {
        if (*s == "cosine" || *s == "cos") {
            cfg.anneal = Anneal::Cosine;
        } else if (*s == "linear") {
            cfg.anneal = Anneal::Linear;
        } else {
            throw Error(ErrorKind::InvalidConfig, "anneal must be cosine or linear, got '" + *s + "'");
        }
    }
    if (auto v = kv.get_double("div_factor")) cfg.div_factor = *v;
    if (auto v = kv.get_double("final_div_factor")) cfg.final_div_factor = *v;
    cfg.validate();
    return cfg;
}

PlateauConfig plateau_config_from(const KeyValueConfig &kv, PlateauConfig cfg) {
    if (auto v = kv.get_double("initial_lr")) cfg.initial_lr = *v;
    if (auto v = kv.get_double("lr_factor")) cfg.factor = *v;
    if (auto v = kv.get_int("epochs_patience")) {
        if (*v < 0) throw Error(ErrorKind::InvalidConfig, "epochs_patience must be nonnegative");
        cfg.epochs_patience = static_cast<std::size_t>(*v);
    }
    if (auto v = kv.get_double("threshold")) cfg.threshold = *v;
    if (auto v = kv.get_double("min_lr")) cfg.min_lr = *v;
    cfg.validate();
    return cfg;
}

} // namespace livseg

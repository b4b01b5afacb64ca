#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

#include "livseg/config.hpp"

namespace livseg {

enum class Anneal { Cosine, Linear };

struct OneCycleConfig {
    double max_lr = 1e-3;
    std::size_t total_epochs = 75;
    std::size_t steps_per_epoch = 1;
    double pct_start = 0.3;
    Anneal anneal = Anneal::Cosine;
    double div_factor = 25.0;
    double final_div_factor = 1e4;

    double initial_lr() const { return max_lr / div_factor; }
    double final_lr() const { return initial_lr() / final_div_factor; }
    std::size_t total_steps() const { return total_epochs * steps_per_epoch; }

    // Throws InvalidConfig.
    void validate() const;
};

struct PlateauConfig {
    double initial_lr = 1e-3;
    double factor = 0.1;
    std::size_t epochs_patience = 3;
    double threshold = 1e-4; // relative
    double min_lr = 0.0;

    void validate() const;
};

struct EarlyStopConfig {
    std::size_t epochs_stop = 6;

    void validate() const;
};

// Warm-up from max_lr/div_factor to max_lr over the first pct_start of the
// steps, then anneal down to max_lr/(div_factor*final_div_factor). Phase
// boundaries follow the PyTorch scheduler: phase one ends at step
// pct_start*total - 1 (fractional), phase two at total - 1.
// Throws StepOutOfRange.
double one_cycle_lr_at(const OneCycleConfig &cfg, std::size_t step);

// Reduce-on-plateau machine over validation losses (mode "min", relative
// threshold): a loss improves when it is below best * (1 - threshold).
// After more than epochs_patience consecutive non-improvements the LR is
// multiplied by factor (floored at min_lr) and the counter resets.
class PlateauScheduler {
public:
    explicit PlateauScheduler(PlateauConfig cfg);

    // Returns the LR in effect after this observation. Throws NonFiniteLoss.
    double observe(double val_loss);

    double current_lr() const { return lr_; }
    std::optional<double> best_loss() const { return best_; }
    std::size_t bad_epochs() const { return bad_epochs_; }
    std::size_t observations() const { return observations_; }
    const PlateauConfig &config() const { return cfg_; }

private:
    PlateauConfig cfg_;
    double lr_;
    std::optional<double> best_;
    std::size_t bad_epochs_ = 0;
    std::size_t observations_ = 0;
};

// Step-driven one-cycle machine; step() advances and returns the next LR.
class OneCycleScheduler {
public:
    explicit OneCycleScheduler(OneCycleConfig cfg);

    double current_lr() const { return one_cycle_lr_at(cfg_, step_); }
    std::size_t step_count() const { return step_; }
    // Throws StepOutOfRange when stepping past the final step.
    double step();
    const OneCycleConfig &config() const { return cfg_; }

private:
    OneCycleConfig cfg_;
    std::size_t step_ = 0;
};

enum class StopDecision { Continue, Stop };

// Stops once epochs_stop consecutive observations fail to beat the best loss
// seen so far (strictly lower wins; ties count as failures).
class EarlyStopping {
public:
    explicit EarlyStopping(EarlyStopConfig cfg);

    // Throws NonFiniteLoss.
    StopDecision observe(double val_loss);

    bool stopped() const { return stopped_; }
    std::size_t counter() const { return counter_; }
    std::optional<double> best_loss() const { return best_; }

private:
    EarlyStopConfig cfg_;
    std::optional<double> best_;
    std::size_t counter_ = 0;
    bool stopped_ = false;
};

using SchedulerConfig = std::variant<OneCycleConfig, PlateauConfig>;

struct LossTrace {
    std::vector<double> val_loss;
    std::vector<double> train_loss; // empty, or the same length as val_loss
};

struct TrajectoryRow {
    std::size_t epoch = 0; // 1-based
    double lr = 0.0;       // LR used while training this epoch
    std::optional<double> train_loss;
    double val_loss = 0.0;
    bool stopped = false;

    friend bool operator==(const TrajectoryRow &, const TrajectoryRow &) = default;
};

using Trajectory = std::vector<TrajectoryRow>;

// Replays a per-epoch loss trace through the scheduler. Row e carries the LR
// used for epoch e; a plateau reduction triggered by epoch e's loss first
// shows up in row e+1. With early stopping the trajectory ends at the row
// whose observation fired it. Throws NonFiniteLoss, StepOutOfRange.
Trajectory simulate_schedule(const SchedulerConfig &scheduler, const LossTrace &trace,
                             const std::optional<EarlyStopConfig> &early);

// Keys: max_lr, total_epochs, steps_per_epoch, pct_start, anneal
// (cosine|linear), div_factor, final_div_factor.
OneCycleConfig one_cycle_config_from(const KeyValueConfig &kv, OneCycleConfig base = {});
// Keys: initial_lr, lr_factor, epochs_patience, threshold, min_lr.
PlateauConfig plateau_config_from(const KeyValueConfig &kv, PlateauConfig base = {});

} // namespace livseg

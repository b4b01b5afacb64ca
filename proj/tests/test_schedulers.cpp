#include <doctest.h>

#include <cmath>
#include <numbers>

#include "livseg/schedulers.hpp"
#include "test_support.hpp"

using namespace livseg;

namespace {

double rel_err(double a, double b) { return std::abs(a - b) / std::abs(b); }

std::vector<double> one_cycle_column(const OneCycleConfig &cfg) {
    std::vector<double> lr;
    for (std::size_t s = 0; s < cfg.total_steps(); ++s) lr.push_back(one_cycle_lr_at(cfg, s));
    return lr;
}

} // namespace

TEST_CASE("one-cycle endpoints and peak") {
    OneCycleConfig cfg;
    cfg.max_lr = 24e-5;

    CHECK(one_cycle_lr_at(cfg, 0) == cfg.max_lr / cfg.div_factor);
    CHECK(rel_err(one_cycle_lr_at(cfg, 74), cfg.max_lr / (cfg.div_factor * cfg.final_div_factor)) <= 1e-12);

    const auto lr = one_cycle_column(cfg);
    const auto peak = static_cast<std::size_t>(std::max_element(lr.begin(), lr.end()) - lr.begin());
    CHECK(peak == 22); // 0-based step; epoch 23 counting from one
    CHECK(lr[peak] <= cfg.max_lr);
    CHECK(rel_err(lr[peak], cfg.max_lr) < 1e-2);

    for (std::size_t s = 1; s <= peak; ++s) CHECK(lr[s] > lr[s - 1]);
    for (std::size_t s = peak + 1; s < lr.size(); ++s) CHECK(lr[s] < lr[s - 1]);

    CHECK_THROWS_AS(one_cycle_lr_at(cfg, 75), Error);
}

TEST_CASE("one-cycle shape for both anneal modes") {
    for (Anneal a : {Anneal::Cosine, Anneal::Linear}) {
        for (double pct : {0.1, 0.25, 0.3, 0.5, 0.9}) {
            OneCycleConfig cfg;
            cfg.anneal = a;
            cfg.pct_start = pct;
            cfg.total_epochs = 40;
            cfg.steps_per_epoch = 3;
            const auto lr = one_cycle_column(cfg);
            const auto peak = static_cast<std::size_t>(std::max_element(lr.begin(), lr.end()) - lr.begin());
            for (std::size_t s = 1; s <= peak; ++s) CHECK(lr[s] > lr[s - 1]);
            for (std::size_t s = peak + 1; s < lr.size(); ++s) CHECK(lr[s] < lr[s - 1]);
            CHECK(lr.front() == cfg.initial_lr());
            CHECK(rel_err(lr.back(), cfg.final_lr()) <= 1e-12);
        }
    }
}

TEST_CASE("cosine midpoint of the anneal phase") {
    // pct 0.2 over 75 steps: phase one ends at step 14, phase two spans 14..74,
    // so its midpoint is exactly step 44 where cos(pi/2) = 0.
    OneCycleConfig cfg;
    cfg.max_lr = 1e-3;
    cfg.pct_start = 0.2;
    const double floor = cfg.max_lr / (cfg.div_factor * cfg.final_div_factor);
    CHECK(rel_err(one_cycle_lr_at(cfg, 14), cfg.max_lr) < 1e-12);
    CHECK(rel_err(one_cycle_lr_at(cfg, 44), (cfg.max_lr + floor) / 2) < 1e-12);

    cfg.anneal = Anneal::Linear;
    CHECK(rel_err(one_cycle_lr_at(cfg, 44), (cfg.max_lr + floor) / 2) < 1e-12);
    // linear warm-up: halfway to the phase-one boundary
    const double start = cfg.max_lr / cfg.div_factor;
    CHECK(rel_err(one_cycle_lr_at(cfg, 7), start + 0.5 * (cfg.max_lr - start)) < 1e-12);
}

TEST_CASE("one-cycle scheduler object matches the pure function") {
    OneCycleConfig cfg;
    OneCycleScheduler s(cfg);
    CHECK(s.current_lr() == one_cycle_lr_at(cfg, 0));
    for (std::size_t k = 1; k < cfg.total_steps(); ++k) CHECK(s.step() == one_cycle_lr_at(cfg, k));
    CHECK_THROWS_AS(s.step(), Error);
}

TEST_CASE("one-cycle config validation") {
    OneCycleConfig cfg;
    cfg.pct_start = 1.0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = {};
    cfg.max_lr = -1;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = {};
    cfg.div_factor = 1.0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = {};
    cfg.total_epochs = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("plateau") {
    SUBCASE("strictly improving keeps the initial LR") {
        PlateauScheduler p({.initial_lr = 16e-5});
        for (int i = 0; i < 100; ++i) CHECK(p.observe(10.0 - 0.05 * i) == 16e-5);
    }
    SUBCASE("drop after the fourth flat observation") {
        PlateauScheduler p({.initial_lr = 16e-5, .factor = 0.1, .epochs_patience = 3});
        CHECK(p.observe(1.0) == 16e-5); // first observation sets the best
        for (int i = 0; i < 3; ++i) CHECK(p.observe(1.0) == 16e-5);
        CHECK(p.observe(1.0) == doctest::Approx(1.6e-5).epsilon(1e-15));
        CHECK(p.bad_epochs() == 0);
    }
    SUBCASE("k reductions give initial * factor^k") {
        PlateauScheduler p({.initial_lr = 1.0, .factor = 0.5, .epochs_patience = 0});
        p.observe(1.0);
        for (int k = 1; k <= 10; ++k) CHECK(p.observe(1.0) == std::pow(0.5, k));
    }
    SUBCASE("floored at min_lr") {
        PlateauScheduler p({.initial_lr = 1.0, .factor = 0.1, .epochs_patience = 0, .min_lr = 0.05});
        p.observe(1.0);
        CHECK(p.observe(1.0) == doctest::Approx(0.1));
        CHECK(p.observe(1.0) == 0.05);
        CHECK(p.observe(1.0) == 0.05);
    }
    SUBCASE("relative threshold") {
        PlateauScheduler p({.initial_lr = 1.0, .epochs_patience = 0, .threshold = 0.1});
        p.observe(1.0);
        CHECK(p.observe(0.95) == 0.1); // not 10% better
    }
    SUBCASE("non-finite loss") {
        PlateauScheduler p({});
        CHECK_THROWS_AS(p.observe(std::nan("")), Error);
        CHECK_THROWS_AS(p.observe(INFINITY), Error);
    }
    SUBCASE("config validation") {
        CHECK_THROWS_AS(PlateauScheduler({.factor = 1.0}), Error);
        CHECK_THROWS_AS(PlateauScheduler({.initial_lr = 1e-3, .min_lr = 1e-3}), Error);
    }
}

TEST_CASE("plateau agrees with the reference rule on random traces") {
    std::mt19937_64 rng(1234);
    for (int trial = 0; trial < 500; ++trial) {
        PlateauConfig cfg;
        cfg.initial_lr = 1e-3;
        cfg.factor = std::array{0.1, 0.5, 0.25}[rng() % 3];
        cfg.epochs_patience = rng() % 5;
        cfg.threshold = std::array{0.0, 1e-4, 1e-2}[rng() % 3];
        cfg.min_lr = (rng() % 2) ? 1e-6 : 0.0;
        PlateauScheduler p(cfg);
        testsupport::ReferencePlateau ref{cfg.initial_lr, cfg.factor, cfg.threshold, cfg.min_lr, cfg.epochs_patience};
        double loss = 1.0;
        double prev = cfg.initial_lr;
        std::uniform_real_distribution<double> step(-0.05, 0.04);
        for (int e = 0; e < 120; ++e) {
            loss = std::max(1e-3, loss + step(rng));
            if (rng() % 5 == 0) loss = std::round(loss * 10) / 10; // exercise ties
            const double got = p.observe(loss);
            ref.observe(loss);
            CHECK(got == ref.lr);
            CHECK(got <= prev);
            if (got < prev) CHECK((got == prev * cfg.factor || got == cfg.min_lr));
            prev = got;
        }
    }
}

TEST_CASE("early stopping") {
    SUBCASE("improving never stops") {
        EarlyStopping es({});
        for (int i = 0; i < 200; ++i) CHECK(es.observe(1.0 / (i + 1)) == StopDecision::Continue);
    }
    SUBCASE("stops on the sixth non-improvement") {
        EarlyStopping es({.epochs_stop = 6});
        es.observe(1.0);
        for (int i = 0; i < 5; ++i) CHECK(es.observe(1.0) == StopDecision::Continue);
        CHECK(es.observe(1.5) == StopDecision::Stop);
        CHECK(es.stopped());
    }
    SUBCASE("reset by an improvement") {
        EarlyStopping es({.epochs_stop = 6});
        es.observe(1.0);
        for (int i = 0; i < 5; ++i) CHECK(es.observe(2.0) == StopDecision::Continue);
        CHECK(es.observe(0.9) == StopDecision::Continue);
        for (int i = 0; i < 5; ++i) CHECK(es.observe(0.9) == StopDecision::Continue);
        CHECK(es.counter() == 5);
    }
    SUBCASE("invalid") {
        CHECK_THROWS_AS(EarlyStopping({.epochs_stop = 0}), Error);
        EarlyStopping es({});
        CHECK_THROWS_AS(es.observe(std::nan("")), Error);
    }
}

TEST_CASE("early stopping fires iff a window without a new best exists") {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + rng() % 60;
        std::vector<double> losses(n);
        for (auto &l : losses) l = static_cast<double>(rng() % 20);
        EarlyStopping es({.epochs_stop = 6});
        std::optional<std::size_t> fired;
        for (std::size_t i = 0; i < n && !fired; ++i)
            if (es.observe(losses[i]) == StopDecision::Stop) fired = i;

        // Oracle: first index closing a run of 6 observations that are not new bests.
        std::optional<std::size_t> expect;
        double best = INFINITY;
        std::size_t run = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (losses[i] < best) {
                best = losses[i];
                run = 0;
            } else if (++run == 6) {
                expect = i;
                break;
            }
        }
        CHECK(fired == expect);
    }
}

TEST_CASE("trajectory simulation") {
    SUBCASE("one-cycle over constant losses") {
        LossTrace trace{std::vector<double>(75, 0.5), {}};
        OneCycleConfig cfg;
        cfg.max_lr = 24e-5;
        const auto t = simulate_schedule(cfg, trace, std::nullopt);
        REQUIRE(t.size() == 75);
        std::size_t peak = 0;
        for (std::size_t i = 0; i < t.size(); ++i) {
            CHECK(t[i].epoch == i + 1);
            CHECK(t[i].lr == one_cycle_lr_at(cfg, i));
            CHECK_FALSE(t[i].stopped);
            if (t[i].lr > t[peak].lr) peak = i;
        }
        CHECK(t[peak].epoch == 23);
    }
    SUBCASE("one-cycle LR ignores the losses") {
        std::mt19937_64 rng(3);
        std::vector<double> losses(75);
        for (auto &l : losses) l = static_cast<double>(rng() % 1000) / 100.0;
        const auto a = simulate_schedule(OneCycleConfig{}, {losses, {}}, std::nullopt);
        std::shuffle(losses.begin(), losses.end(), rng);
        const auto b = simulate_schedule(OneCycleConfig{}, {losses, {}}, std::nullopt);
        for (std::size_t i = 0; i < 75; ++i) CHECK(a[i].lr == b[i].lr);
    }
    SUBCASE("plateau: twenty improving epochs then flat") {
        std::vector<double> losses;
        for (int i = 0; i < 20; ++i) losses.push_back(1.0 - 0.02 * i);
        for (int i = 0; i < 30; ++i) losses.push_back(losses.back());
        PlateauConfig cfg{.initial_lr = 16e-5, .factor = 0.1, .epochs_patience = 3};
        const auto t = simulate_schedule(cfg, {losses, {}}, EarlyStopConfig{.epochs_stop = 6});
        REQUIRE(t.size() == 26);
        CHECK(t.back().stopped);
        CHECK(t.back().epoch == 26);
        // epoch 24 is the fourth flat observation; its reduction governs epoch 25
        for (std::size_t i = 0; i < 24; ++i) CHECK(t[i].lr == 16e-5);
        CHECK(t[24].lr == doctest::Approx(1.6e-5).epsilon(1e-15));
        CHECK(t[25].lr == t[24].lr);
        for (std::size_t i = 0; i + 1 < t.size(); ++i) CHECK_FALSE(t[i].stopped);
    }
    SUBCASE("without early stopping the length matches the trace") {
        std::vector<double> losses(40, 1.0);
        const auto t = simulate_schedule(PlateauConfig{}, {losses, {}}, std::nullopt);
        CHECK(t.size() == 40);
    }
    SUBCASE("empty trace") {
        CHECK(simulate_schedule(PlateauConfig{}, {}, EarlyStopConfig{}).empty());
        CHECK(simulate_schedule(OneCycleConfig{}, {}, std::nullopt).empty());
    }
    SUBCASE("trace longer than the one-cycle schedule") {
        CHECK_THROWS_AS(simulate_schedule(OneCycleConfig{}, {std::vector<double>(76, 1.0), {}}, std::nullopt), Error);
    }
    SUBCASE("train losses are carried through") {
        const auto t = simulate_schedule(PlateauConfig{}, {{0.5, 0.4}, {0.7, 0.6}}, std::nullopt);
        REQUIRE(t.size() == 2);
        CHECK(t[1].train_loss == 0.6);
        CHECK(t[1].val_loss == 0.4);
    }
    SUBCASE("deterministic") {
        std::vector<double> losses;
        for (int i = 0; i < 60; ++i) losses.push_back(std::sin(i * 0.3) + 2.0);
        const auto a = simulate_schedule(PlateauConfig{}, {losses, {}}, EarlyStopConfig{});
        const auto b = simulate_schedule(PlateauConfig{}, {losses, {}}, EarlyStopConfig{});
        CHECK(a == b);
    }
}

TEST_CASE("scheduler config from key=value text") {
    const auto kv = KeyValueConfig::parse("max_lr=24e-5\ntotal_epochs=50\nanneal=linear\n");
    const auto oc = one_cycle_config_from(kv);
    CHECK(oc.max_lr == 24e-5);
    CHECK(oc.total_epochs == 50);
    CHECK(oc.anneal == Anneal::Linear);

    const auto pc = plateau_config_from(KeyValueConfig::parse("initial_lr=16e-5\nlr_factor=0.5\nepochs_patience=2\n"));
    CHECK(pc.initial_lr == 16e-5);
    CHECK(pc.factor == 0.5);
    CHECK(pc.epochs_patience == 2);

    CHECK_THROWS_AS(one_cycle_config_from(KeyValueConfig::parse("anneal=cubic\n")), Error);
}

#include <doctest.h>

#include <set>

#include "livseg/experiment.hpp"
#include "test_support.hpp"

using namespace livseg;

namespace {

std::vector<std::string> numbered(std::size_t n) {
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) ids.push_back(canonical_record_id(std::to_string(i)));
    return ids;
}

// The documented shuffle, written out independently: Fisher-Yates from the
// back, each index drawn from [0, i] by rejecting raw outputs below 2^64 mod m.
std::vector<std::size_t> reference_order(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    for (std::size_t i = n; i > 1; --i) {
        const std::uint64_t m = i;
        const std::uint64_t floor = (std::numeric_limits<std::uint64_t>::max() % m + 1) % m;
        std::uint64_t r;
        do r = rng();
        while (r < floor);
        std::swap(order[i - 1], order[r % m]);
    }
    return order;
}

MetricReport fold(double dice_value) {
    MetricReport r;
    r.dice_pct = dice_value;
    r.iou_pct = 96.33;
    r.rvd = -0.008;
    r.asd_mm = 0.624;
    r.rmsd_mm = 2.15;
    r.msd_mm = 27.16;
    r.hd95_mm = 4.1;
    return r;
}

} // namespace

TEST_CASE("kfold partition invariants") {
    for (std::size_t n : {5, 10, 11, 23, 280}) {
        for (std::size_t k : {1, 2, 5}) {
            const auto ids = numbered(n);
            const auto folds = kfold_split(ids, k, 17);
            REQUIRE(folds.size() == k);
            std::map<std::string, int> val_count, train_count;
            std::size_t lo = n, hi = 0;
            for (std::size_t f = 0; f < k; ++f) {
                CHECK(folds[f].fold_index == f);
                CHECK(folds[f].seed == 17);
                lo = std::min(lo, folds[f].val_ids.size());
                hi = std::max(hi, folds[f].val_ids.size());
                for (const auto &id : folds[f].val_ids) ++val_count[id];
                for (const auto &id : folds[f].train_ids) ++train_count[id];
                CHECK(folds[f].train_ids.size() + folds[f].val_ids.size() == n);
                std::set<std::string> v(folds[f].val_ids.begin(), folds[f].val_ids.end());
                for (const auto &id : folds[f].train_ids) CHECK(v.count(id) == 0);
            }
            CHECK(hi - lo <= 1);
            for (const auto &id : ids) {
                CHECK(val_count[id] == 1);
                CHECK(train_count[id] == static_cast<int>(k - 1));
            }
        }
    }
}

TEST_CASE("kfold examples") {
    const auto ten = kfold_split(numbered(10), 5, 1);
    for (const auto &f : ten) CHECK(f.val_ids.size() == 2);

    const auto a = kfold_split(numbered(40), 5, 123);
    const auto b = kfold_split(numbered(40), 5, 123);
    for (std::size_t f = 0; f < 5; ++f) {
        CHECK(a[f].val_ids == b[f].val_ids);
        CHECK(a[f].train_ids == b[f].train_ids);
    }
    const auto c = kfold_split(numbered(40), 5, 124);
    bool differs = false;
    for (std::size_t f = 0; f < 5; ++f) differs |= a[f].val_ids != c[f].val_ids;
    CHECK(differs);

    // 303 training-pool records minus the 23 held out
    std::vector<std::string> pool;
    const std::set<std::string> held(test_record_ids().begin(), test_record_ids().end());
    for (std::size_t i = 0; pool.size() < 280; ++i) {
        const auto id = canonical_record_id(std::to_string(i));
        if (!held.count(id)) pool.push_back(id);
    }
    for (const auto &f : kfold_split(pool, 5, 7)) CHECK(f.val_ids.size() == 56);
}

TEST_CASE("kfold follows the documented shuffle") {
    for (std::uint64_t seed : {0ULL, 1ULL, 42ULL, 0xdeadbeefULL}) {
        for (std::size_t n : {7, 13, 50}) {
            const auto ids = numbered(n);
            const auto order = reference_order(n, seed);
            const auto folds = kfold_split(ids, 3, seed);
            std::vector<std::string> concat;
            for (const auto &f : folds) concat.insert(concat.end(), f.val_ids.begin(), f.val_ids.end());
            for (std::size_t i = 0; i < n; ++i) CHECK(concat[i] == ids[order[i]]);
            // first n % k folds take the extra id
            for (std::size_t f = 0; f < 3; ++f) CHECK(folds[f].val_ids.size() == n / 3 + (f < n % 3 ? 1 : 0));
        }
    }
}

TEST_CASE("kfold errors") {
    CHECK_THROWS_AS(kfold_split(numbered(4), 5, 0), Error);
    CHECK_THROWS_AS(kfold_split(numbered(4), 0, 0), Error);
    std::vector<std::string> dup{"001", "002", "001"};
    CHECK_THROWS_AS(kfold_split(dup, 2, 0), Error);
    try {
        kfold_split(numbered(4), 5, 0);
    } catch (const Error &e) {
        CHECK(e.kind() == ErrorKind::TooFewRecords);
    }
}

TEST_CASE("held-out record ids") {
    const std::vector<std::string> expect{"003", "012", "045", "072", "090", "105", "117", "129",
                                          "141", "153", "169", "178", "193", "205", "220", "236",
                                          "246", "258", "268", "280", "294", "304", "320"};
    CHECK(test_record_ids() == expect);
    CHECK(test_record_ids().size() == 23);
    CHECK(test_record_ids().front() == "003");
    CHECK(std::count(test_record_ids().begin(), test_record_ids().end(), "294") == 1);
    CHECK(canonical_record_id("3") == "003");
    CHECK(canonical_record_id("294") == "294");
    CHECK(canonical_record_id("1234") == "1234");
}

TEST_CASE("mean and sample std") {
    const std::vector<double> v{98.1, 98.1, 98.1, 98.1, 98.2};
    const auto ms = mean_std(v);
    CHECK(ms.mean == doctest::Approx(98.12).epsilon(1e-12));
    CHECK(ms.std == doctest::Approx(std::sqrt(0.008 / 4.0)).epsilon(1e-9));
    const std::vector<double> one{3.0};
    CHECK(mean_std(one).std == 0.0);
}

TEST_CASE("aggregate formatting") {
    std::vector<MetricReport> folds{fold(98.1), fold(98.1), fold(98.1), fold(98.1), fold(98.2)};
    const std::vector<std::size_t> epochs{22, 21, 24, 23, 20};
    const auto row = aggregate(folds, epochs);
    const auto cells = row.cells();
    REQUIRE(cells.size() == 8);
    CHECK(cells[0] == "98.12 (0.04)");
    CHECK(cells[1] == "96.33 (0.00)");
    CHECK(cells[2] == "-0.008 (0.000)");
    CHECK(cells[3] == "0.624 (0.000)");
    CHECK(cells[4] == "2.15 (0.00)");
    CHECK(cells[5] == "27.16 (0.00)");
    CHECK(cells[6] == "4.10 (0.00)");
    CHECK(cells[7] == "22.0 (1.6)");

    SUBCASE("permutation invariant") {
        std::mt19937_64 rng(5);
        std::vector<MetricReport> varied;
        for (int f = 0; f < 5; ++f) {
            auto r = fold(97.0 + static_cast<double>(rng() % 300) / 100.0);
            r.asd_mm = static_cast<double>(rng() % 1000) / 997.0;
            varied.push_back(r);
        }
        const auto base = aggregate(varied, {}).cells();
        for (int t = 0; t < 20; ++t) {
            std::shuffle(varied.begin(), varied.end(), rng);
            CHECK(aggregate(varied, {}).cells() == base);
        }
        CHECK(base[7] == "n/a");
    }
    SUBCASE("wrong fold counts") {
        try {
            aggregate(std::span(folds).first(4), {});
            FAIL("expected FoldCountMismatch");
        } catch (const Error &e) {
            CHECK(e.kind() == ErrorKind::FoldCountMismatch);
        }
        const std::vector<std::size_t> three{1, 2, 3};
        CHECK_THROWS_AS(aggregate(folds, three), Error);
    }
    SUBCASE("undefined metrics stay undefined") {
        auto partial = folds;
        for (auto &f : partial) f.asd_mm.reset();
        CHECK(aggregate(partial, {}).cells()[3] == "n/a");
    }
    SUBCASE("no negative zero") {
        auto tiny = folds;
        for (auto &f : tiny) f.rvd = -1e-5;
        CHECK(aggregate(tiny, {}).cells()[2] == "0.000 (0.000)");
    }
}

TEST_CASE("mean_report skips undefined entries") {
    MetricReport a = fold(90.0), b = fold(96.0), c;
    c.dice_pct = 0.0;
    const std::vector<MetricReport> reports{a, b, c};
    const auto m = mean_report(reports, "f0");
    CHECK(m.record_id == "f0");
    CHECK(m.dice_pct == 62.0);
    CHECK(*m.asd_mm == doctest::Approx(0.624));
    const std::vector<MetricReport> only_c{c};
    CHECK_FALSE(mean_report(only_c).asd_mm.has_value());
}

TEST_CASE("render_table") {
    std::vector<MetricReport> folds{fold(98.1), fold(98.1), fold(98.1), fold(98.1), fold(98.2)};
    const std::vector<std::size_t> epochs{22, 21, 24, 23, 20};
    const std::vector<TableRow> rows{{"ReduceLRonPlateau 16e-5", aggregate(folds, epochs)}};
    const auto text = render_table(rows);
    CHECK(text.find("98.12 (0.04)") != std::string::npos);
    CHECK(text.find("ReduceLRonPlateau 16e-5") != std::string::npos);
    CHECK(text.find("22.0 (1.6)") != std::string::npos);
}

TEST_CASE("convergence log") {
    testsupport::TempDir dir;
    SUBCASE("empty trajectory is header only") {
        write_convergence_log({}, dir / "e.csv");
        CHECK(testsupport::slurp(dir / "e.csv") == "epoch,lr,train_loss,val_loss,stopped\n");
        CHECK(read_convergence_log(dir / "e.csv").empty());
    }
    SUBCASE("75 rows round-trip exactly") {
        std::vector<double> val, train;
        for (int i = 0; i < 75; ++i) {
            val.push_back(1.0 / (i + 3.0));
            train.push_back(std::exp(-0.1 * i) + 1e-17 * i);
        }
        OneCycleConfig cfg;
        cfg.max_lr = 24e-5;
        const auto t = simulate_schedule(cfg, {val, train}, std::nullopt);
        write_convergence_log(t, dir / "t.csv");
        const auto text = testsupport::slurp(dir / "t.csv");
        CHECK(std::count(text.begin(), text.end(), '\n') == 76);
        CHECK(read_convergence_log(dir / "t.csv") == t);
    }
    SUBCASE("missing train losses survive") {
        const auto t = simulate_schedule(PlateauConfig{}, {{0.3, 0.2, 0.2}, {}}, EarlyStopConfig{});
        write_convergence_log(t, dir / "p.csv");
        CHECK(read_convergence_log(dir / "p.csv") == t);
    }
    SUBCASE("unwritable path") {
        try {
            write_convergence_log({}, dir / "missing" / "x.csv");
            FAIL("expected IoFailure");
        } catch (const Error &e) {
            CHECK(e.kind() == ErrorKind::IoFailure);
        }
    }
}

TEST_CASE("loss trace files") {
    testsupport::TempDir dir;
    testsupport::spit(dir / "one.csv", "val_loss\n0.5\n0.4\n\n0.3\n");
    auto t = read_loss_trace(dir / "one.csv");
    CHECK(t.val_loss == std::vector<double>{0.5, 0.4, 0.3});
    CHECK(t.train_loss.empty());

    testsupport::spit(dir / "two.csv", "0.9,0.5\n0.8,0.4\n");
    t = read_loss_trace(dir / "two.csv");
    CHECK(t.train_loss == std::vector<double>{0.9, 0.8});
    CHECK(t.val_loss == std::vector<double>{0.5, 0.4});

    testsupport::spit(dir / "bad.csv", "0.5\nabc\n");
    CHECK_THROWS_AS(read_loss_trace(dir / "bad.csv"), Error);
}

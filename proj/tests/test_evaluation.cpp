#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "oracles.hpp"
#include "oxysense/evaluation.hpp"
#include "oxysense/fixture.hpp"
#include "oxysense/io.hpp"
#include "oxysense/rng.hpp"

using namespace oxysense;

namespace {

const CalibrationTable& table() {
    static const CalibrationTable t = fixture::make_calibration();
    return t;
}

Dataset fixture_data(std::size_t m, std::uint64_t seed) {
    return generate_synthetic(table(), fixture::frequency_grid_hz(), m, 0.0, 110.0, seed);
}

/// Dataset whose labels sit at a fixed offset from the model's batched
/// predictions, so every AE is known exactly.
Dataset shifted_labels(const NetworkModel& model, const Dataset& base,
                       const std::vector<double>& shifts) {
    const Eigen::VectorXd preds = forward_batch(model, base.features_cols());
    std::vector<Observation> obs;
    for (std::size_t i = 0; i < base.size(); ++i) {
        const auto& o = base.observations()[i];
        const double pred = preds(static_cast<Eigen::Index>(i));
        obs.push_back({Concentration(std::max(0.0, pred - shifts[i % shifts.size()])),
                       o.temperature, o.ratios});
    }
    return Dataset(base.frequencies_hz(), base.temperature(), obs, Provenance::synthetic, {});
}

std::string mask_duration_column(const std::filesystem::path& csv) {
    std::ifstream in(csv);
    std::stringstream out;
    std::string line;
    while (std::getline(in, line)) {
        // duration_s is the 8th of 9 columns
        std::size_t pos = 0;
        for (int i = 0; i < 7; ++i) pos = line.find(',', pos) + 1;
        const std::size_t end = line.find(',', pos);
        out << line.substr(0, pos) << "X" << line.substr(end) << "\n";
    }
    return out.str();
}

}  // namespace

TEST_CASE("mae and ae_per_observation") {
    const NetworkModel m = init_model(NetworkSpec{16, 1, 4, 110.0}, 5);
    const Dataset base = fixture_data(20, 5);

    SUBCASE("perfect predictions give zero") {
        const Dataset perfect = shifted_labels(m, base, {0.0});
        CHECK(mae(m, perfect) == 0.0);
        for (const auto& rec : ae_per_observation(m, perfect)) CHECK(rec.ae == 0.0);
    }
    SUBCASE("hand arithmetic: errors 1 and 2 give MAE 1.5") {
        Dataset two(base.frequencies_hz(), base.temperature(),
                    {base.observations()[0], base.observations()[1]}, Provenance::synthetic, {});
        const Dataset shifted = shifted_labels(m, two, {1.0, -2.0});
        CHECK(mae(m, shifted) == doctest::Approx(1.5).epsilon(1e-12));
        const auto recs = ae_per_observation(m, shifted);
        REQUIRE(recs.size() == 2);
        CHECK(recs[0].ae == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(recs[1].ae == doctest::Approx(2.0).epsilon(1e-12));
        CHECK(recs[0].o2_predicted == doctest::Approx(recs[0].o2_measured + 1.0).epsilon(1e-12));
    }
    SUBCASE("mae equals the mean of the AE table exactly") {
        const auto recs = ae_per_observation(m, base);
        CHECK(recs.size() == base.size());
        double sum = 0.0;
        for (const auto& rec : recs) sum += rec.ae;
        CHECK(mae(m, base) == sum / static_cast<double>(recs.size()));

        double max_ae = 0.0;
        for (const auto& rec : recs) max_ae = std::max(max_ae, rec.ae);
        CHECK(mae(m, base) <= max_ae);
        CHECK(mae(m, base) >= 0.0);
    }
    SUBCASE("empty dataset is an error") {
        const Dataset empty(base.frequencies_hz(), base.temperature(), {}, Provenance::synthetic, {});
        CHECK_THROWS_AS(mae(m, empty), std::invalid_argument);
        CHECK_THROWS_AS(ae_per_observation(m, empty), std::invalid_argument);
    }
}

TEST_CASE("run_sweep basics") {
    const Dataset all = fixture_data(60, 31);
    const auto [train_set, dev_set] = split(all, 0.8, 31);
    const Dataset test_set = generate_mismatch_test(
        table(), fixture::frequency_grid_hz(), {10.0, 50.0, 90.0}, {0.001, 0.01}, 31);

    SweepGrid grid;
    grid.trial_config.epochs = 40;
    grid.base_seed = 8;

    SUBCASE("default grid yields 18 rows sorted by (layers, neurons)") {
        const EvalReport report = run_sweep(grid, train_set, dev_set, test_set);
        REQUIRE(report.rows.size() == 18);
        for (std::size_t i = 0; i + 1 < report.rows.size(); ++i) {
            const auto& a = report.rows[i];
            const auto& b = report.rows[i + 1];
            CHECK((a.layers < b.layers || (a.layers == b.layers && a.neurons < b.neurons)));
        }
        for (const auto& row : report.rows) {
            CHECK(row.status == "ok");
            CHECK(row.mae_train >= 0.0);
            CHECK(row.epochs == 40);
        }
    }
    SUBCASE("adding grid cells never changes existing trials") {
        SweepGrid small = grid;
        small.layer_counts = {1};
        small.neuron_counts = {3};
        SweepGrid bigger = grid;
        bigger.layer_counts = {1, 2};
        bigger.neuron_counts = {3, 5};
        const EvalReport a = run_sweep(small, train_set, dev_set, test_set);
        const EvalReport b = run_sweep(bigger, train_set, dev_set, test_set);
        CHECK(a.rows[0].seed == b.rows[0].seed);
        CHECK(a.rows[0].mae_train == b.rows[0].mae_train);
        CHECK(a.rows[0].mae_dev == b.rows[0].mae_dev);
        CHECK(a.rows[0].mae_test == b.rows[0].mae_test);
    }
    SUBCASE("report is identical for any worker count") {
        const EvalReport seq = run_sweep(grid, train_set, dev_set, test_set, 1);
        const EvalReport par = run_sweep(grid, train_set, dev_set, test_set, 3);
        REQUIRE(seq.rows.size() == par.rows.size());
        for (std::size_t i = 0; i < seq.rows.size(); ++i) {
            CHECK(seq.rows[i].seed == par.rows[i].seed);
            CHECK(seq.rows[i].mae_train == par.rows[i].mae_train);
            CHECK(seq.rows[i].mae_dev == par.rows[i].mae_dev);
            CHECK(seq.rows[i].mae_test == par.rows[i].mae_test);
            CHECK(seq.rows[i].status == par.rows[i].status);
        }
        // CSV files differ only in the wall-clock duration column
        const auto p1 = std::filesystem::temp_directory_path() / "oxysense_sweep1.csv";
        const auto p2 = std::filesystem::temp_directory_path() / "oxysense_sweep2.csv";
        write_sweep_csv(seq, p1);
        write_sweep_csv(par, p2);
        CHECK(mask_duration_column(p1) == mask_duration_column(p2));
        std::filesystem::remove(p1);
        std::filesystem::remove(p2);
    }
    SUBCASE("a diverging trial is flagged and the sweep continues") {
        std::vector<Observation> obs = train_set.observations();
        obs[0].o2 = Concentration(1e300);
        const Dataset poisoned(train_set.frequencies_hz(), train_set.temperature(), obs,
                               Provenance::synthetic, {});
        SweepGrid tiny = grid;
        tiny.layer_counts = {1};
        tiny.neuron_counts = {3, 5};
        const EvalReport report = run_sweep(tiny, poisoned, dev_set, test_set);
        REQUIRE(report.rows.size() == 2);
        for (const auto& row : report.rows) {
            CHECK(row.status == "diverged");
            CHECK(std::isnan(row.mae_train));
        }
    }
}

TEST_CASE("concentration_profile") {
    const NetworkModel m = init_model(NetworkSpec{16, 1, 4, 110.0}, 9);
    const Dataset base = fixture_data(10, 9);

    SUBCASE("perfect model gives all-zero bins") {
        const Dataset perfect = shifted_labels(m, base, {0.0});
        const auto bins = concentration_profile(m, perfect, {0.0, 55.0, 110.0});
        std::size_t total = 0;
        for (const auto& b : bins) {
            total += b.count;
            if (b.count > 0) CHECK(b.mean_ae == 0.0);
        }
        CHECK(total == 10);
    }
    SUBCASE("bin counts add up and empty bins are reported") {
        const auto bins = concentration_profile(m, base, {0.0, 50.0, 110.0, 200.0, 300.0});
        REQUIRE(bins.size() == 4);
        std::size_t total = 0;
        for (const auto& b : bins) total += b.count;
        CHECK(total == 10);
        CHECK(bins[3].count == 0);
        CHECK(std::isnan(bins[3].mean_ae));
        CHECK(std::isnan(bins[3].median_ae));
        CHECK(std::isnan(bins[3].max_ae));
    }
    SUBCASE("a concentration-dependent error shows up in the right bins") {
        // labels shifted by 0 below 55 % air and by 3 % air above
        const Eigen::VectorXd preds = forward_batch(m, base.features_cols());
        std::vector<Observation> obs;
        for (std::size_t i = 0; i < base.size(); ++i) {
            const auto& o = base.observations()[i];
            const double pred = preds(static_cast<Eigen::Index>(i));
            const double shift = o.o2.percent_air() < 55.0 ? 0.1 : 3.0;
            obs.push_back({Concentration(std::max(0.0, pred - shift)), o.temperature, o.ratios});
        }
        // bin by the shifted labels themselves
        const Dataset ds(base.frequencies_hz(), base.temperature(), obs, Provenance::synthetic, {});
        const auto bins = concentration_profile(m, ds, {0.0, 200.0});
        CHECK(bins[0].count == 10);
        CHECK(bins[0].max_ae >= 2.9);
    }
    SUBCASE("labels outside the bins are an error") {
        CHECK_THROWS_AS(concentration_profile(m, base, {0.0, 50.0}), std::invalid_argument);
    }
}

TEST_CASE("report CSV writers") {
    const NetworkModel m = init_model(NetworkSpec{16, 1, 3, 110.0}, 2);
    const Dataset base = fixture_data(6, 2);
    const auto dir = std::filesystem::temp_directory_path();

    const auto ae_path = dir / "oxysense_test_ae.csv";
    write_ae_csv(ae_per_observation(m, base), ae_path);
    std::ifstream ae_in(ae_path);
    std::string header;
    std::getline(ae_in, header);
    CHECK(header == "o2_measured,o2_predicted,ae");
    std::size_t rows = 0;
    std::string line;
    while (std::getline(ae_in, line)) ++rows;
    CHECK(rows == 6);
    std::filesystem::remove(ae_path);

    const auto prof_path = dir / "oxysense_test_profile.csv";
    write_profile_csv(concentration_profile(m, base, {0.0, 55.0, 110.0}), prof_path);
    std::ifstream prof_in(prof_path);
    std::getline(prof_in, header);
    CHECK(header == "bin_lo,bin_hi,count,mean_ae,median_ae,max_ae");
    std::filesystem::remove(prof_path);
}

TEST_CASE("dev error trend is non-increasing along the neuron axis" *
          doctest::timeout(600)) {
    // statistical trend check at a reduced training scale: median of 3 seeds
    // per cell, tolerance 0.05 % air
    const Dataset all = fixture_data(1000, 55);
    const auto [train_set, dev_set] = split(all, 0.8, 55);

    for (int layers : {2, 3}) {
        std::vector<double> medians;
        for (int neurons : {3, 5, 10, 20, 30, 50}) {
            std::vector<double> maes;
            for (std::uint64_t s = 0; s < 3; ++s) {
                TrainConfig cfg{};
                cfg.epochs = 2500;
                cfg.seed = rng::combine(rng::combine(900 + s, layers), neurons);
                const auto [model, report] =
                    train(NetworkSpec{16, layers, neurons, 110.0}, train_set, cfg);
                maes.push_back(mae(model, dev_set));
            }
            medians.push_back(oracles::median(maes));
        }
        for (std::size_t i = 0; i + 1 < medians.size(); ++i) {
            CHECK(medians[i + 1] <= medians[i] + 0.05);
        }
    }
}

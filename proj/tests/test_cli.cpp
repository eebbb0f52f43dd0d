#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include "oxysense/calibration.hpp"
#include "oxysense/dataset.hpp"
#include "oxysense/fixture.hpp"
#include "oxysense/io.hpp"
#include "oxysense/network.hpp"
#include "oxysense/quench.hpp"

using namespace oxysense;
namespace fs = std::filesystem;

#ifndef OXYSENSE_CLI_PATH
#error "OXYSENSE_CLI_PATH must point at the oxysense binary"
#endif

namespace {

struct RunResult {
    int exit_code;
    std::string output;
};

const fs::path& work_dir() {
    static const fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "oxysense_cli_test";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

RunResult run(const std::string& args) {
    const fs::path out = work_dir() / "last_output.txt";
    const std::string cmd =
        std::string(OXYSENSE_CLI_PATH) + " " + args + " > " + out.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    RunResult result;
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(out);
    result.output.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    return result;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

/// Paths of the staged pipeline shared by the test cases below.
struct Pipeline {
    fs::path raw = work_dir() / "raw.csv";
    fs::path curves = work_dir() / "curves.json";
    fs::path calib = work_dir() / "calibration.json";
    fs::path data = work_dir() / "data.csv";
    fs::path model = work_dir() / "model.json";
    fs::path report = work_dir() / "report.csv";
};

const Pipeline& pipeline() {
    static const Pipeline p = [] {
        Pipeline stage;
        fixture::write_raw_phase_csv(stage.raw);
        REQUIRE(run("ingest " + stage.raw.string() + " " + stage.curves.string()).exit_code == 0);
        REQUIRE(run("calibrate " + stage.curves.string() + " " + stage.calib.string()).exit_code == 0);
        REQUIRE(run("generate " + stage.calib.string() + " " + stage.data.string() +
                    " --m 400 --seed 7")
                    .exit_code == 0);
        REQUIRE(run("train " + stage.data.string() + " " + stage.model.string() +
                    " --layers 1 --neurons 8 --epochs 800 --seed 7")
                    .exit_code == 0);
        return stage;
    }();
    return p;
}

}  // namespace

TEST_CASE("ingest produces curves that match the forward model") {
    const Pipeline& p = pipeline();
    const std::string text = slurp(p.curves);
    CHECK(text.find("\"temperature_c\"") != std::string::npos);

    // every reconstructed r equals the fixture model ratio to 1e-12
    const CalibrationTable truth = fixture::make_calibration();
    const CalibrationTable fitted = read_calibration(p.calib);
    REQUIRE(fitted.entries().size() == truth.entries().size());
    for (std::size_t i = 0; i < truth.entries().size(); ++i) {
        const auto& fit = fitted.entries()[i].fit.params;
        const auto& ref = truth.entries()[i].fit.params;
        CHECK(fit.f() == doctest::Approx(ref.f()).epsilon(1e-5));
        CHECK(fit.ksv1() == doctest::Approx(ref.ksv1()).epsilon(1e-5));
        CHECK(fit.ksv2() == doctest::Approx(ref.ksv2()).epsilon(1e-5));
    }
}

TEST_CASE("ingest errors name the offending group") {
    const fs::path raw = work_dir() / "raw_missing_ref.csv";
    {
        std::ofstream out(raw);
        out << "frequency_hz,temperature_c,o2_percent_air,tan_theta\n";
        out << "6000,45,0,0.5\n6000,45,20,0.4\n6000,45,40,0.3\n6000,45,60,0.25\n";
        out << "8000,45,20,0.5\n8000,45,40,0.4\n8000,45,60,0.35\n8000,45,80,0.3\n";
    }
    const RunResult r = run("ingest " + raw.string() + " " + (work_dir() / "x.json").string());
    CHECK(r.exit_code != 0);
    CHECK(r.output.find("8000") != std::string::npos);

    const fs::path neg = work_dir() / "raw_negative.csv";
    {
        std::ofstream out(neg);
        out << "frequency_hz,temperature_c,o2_percent_air,tan_theta\n";
        out << "6000,45,0,0.5\n6000,45,20,-0.4\n6000,45,40,0.3\n6000,45,60,0.25\n";
    }
    CHECK(run("ingest " + neg.string() + " " + (work_dir() / "y.json").string()).exit_code != 0);
}

TEST_CASE("generate is deterministic and honors --mismatch") {
    const Pipeline& p = pipeline();
    const fs::path a = work_dir() / "gen_a.csv";
    const fs::path b = work_dir() / "gen_b.csv";
    REQUIRE(run("generate " + p.calib.string() + " " + a.string() + " --m 50 --seed 3").exit_code == 0);
    REQUIRE(run("generate " + p.calib.string() + " " + b.string() + " --m 50 --seed 3").exit_code == 0);
    CHECK(slurp(a) == slurp(b));
    CHECK(slurp(fs::path(a).replace_extension(".meta.json")) ==
          slurp(fs::path(b).replace_extension(".meta.json")));

    const fs::path t = work_dir() / "gen_test.csv";
    REQUIRE(run("generate " + p.calib.string() + " " + t.string() + " --mismatch --seed 4")
                .exit_code == 0);
    const Dataset test_set = read_dataset(t);
    CHECK(test_set.provenance() == Provenance::mismatch);
    CHECK(test_set.size() == 10);
}

TEST_CASE("train reports errors and predict inverts ratios") {
    const Pipeline& p = pipeline();
    const LoadedModel loaded = load_model(p.model);
    CHECK(loaded.model.spec.hidden_layers == 1);
    CHECK(loaded.model.spec.neurons_per_layer == 8);

    // predict with 16 explicit ratios computed at 40 % air
    const CalibrationTable truth = read_calibration(p.calib);
    std::string args = "predict " + p.model.string();
    for (const auto& entry : truth.entries()) {
        const double r = phase_ratio_r(entry.fit.params, Concentration(40.0));
        args += " " + io::format_double(r);
    }
    const RunResult r = run(args);
    CHECK(r.exit_code == 0);
    const double predicted = std::stod(r.output);
    CHECK(std::abs(predicted - 40.0) <= 15.0);  // a lightly trained model
}

TEST_CASE("evaluate writes the AE table and profile") {
    const Pipeline& p = pipeline();
    const RunResult r =
        run("evaluate " + p.model.string() + " " + p.data.string() + " " + p.report.string());
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("MAE") != std::string::npos);
    CHECK(slurp(p.report).find("o2_measured,o2_predicted,ae") == 0);
    const fs::path profile = work_dir() / "report.profile.csv";
    CHECK(slurp(profile).find("bin_lo,bin_hi,count") == 0);
}

TEST_CASE("commands are idempotent byte for byte") {
    const Pipeline& p = pipeline();
    const std::string calib_before = slurp(p.calib);
    REQUIRE(run("calibrate " + p.curves.string() + " " + p.calib.string()).exit_code == 0);
    CHECK(slurp(p.calib) == calib_before);

    const std::string model_before = slurp(p.model);
    REQUIRE(run("train " + p.data.string() + " " + p.model.string() +
                " --layers 1 --neurons 8 --epochs 800 --seed 7")
                .exit_code == 0);
    CHECK(slurp(p.model) == model_before);
}

TEST_CASE("sweep runs a small grid and writes the report") {
    const Pipeline& p = pipeline();
    const fs::path test_set = work_dir() / "sweep_test.csv";
    REQUIRE(run("generate " + p.calib.string() + " " + test_set.string() + " --mismatch --seed 6")
                .exit_code == 0);
    const fs::path report = work_dir() / "sweep.csv";
    const RunResult r = run("sweep " + p.data.string() + " --test " + test_set.string() +
                            " --layers 1 --neurons 3,5 --epochs 60 --seed 5 --out " +
                            report.string());
    CHECK(r.exit_code == 0);
    const std::string text = slurp(report);
    CHECK(text.find("layers,neurons,seed,mae_train,mae_dev,mae_test,epochs,duration_s,status") == 0);
    std::size_t rows = std::count(text.begin(), text.end(), '\n');
    CHECK(rows == 3);  // header + 2 trials
}

TEST_CASE("config file supplies defaults and flags override it") {
    const Pipeline& p = pipeline();
    const fs::path cfg = work_dir() / "run.json";
    {
        std::ofstream out(cfg);
        out << R"({"train": {"layers": 1, "neurons": 4, "epochs": 50, "seed": 11}})";
    }
    const fs::path model = work_dir() / "cfg_model.json";
    REQUIRE(run("train " + p.data.string() + " " + model.string() + " --config " + cfg.string())
                .exit_code == 0);
    CHECK(load_model(model).model.spec.neurons_per_layer == 4);

    // flag wins over the config value
    REQUIRE(run("train " + p.data.string() + " " + model.string() + " --config " + cfg.string() +
                " --neurons 6")
                .exit_code == 0);
    CHECK(load_model(model).model.spec.neurons_per_layer == 6);

    // unknown keys are rejected
    const fs::path bad = work_dir() / "bad.json";
    {
        std::ofstream out(bad);
        out << R"({"train": {"epohcs": 50}})";
    }
    CHECK(run("train " + p.data.string() + " " + model.string() + " --config " + bad.string())
              .exit_code == 2);
}

TEST_CASE("exit codes") {
    const Pipeline& p = pipeline();
    SUBCASE("usage errors exit 2") {
        CHECK(run("--definitely-not-a-flag").exit_code == 2);
        CHECK(run("train --bogus").exit_code == 2);
        CHECK(run("").exit_code == 2);  // a subcommand is required
    }
    SUBCASE("missing files exit 2 and name the path") {
        const RunResult r = run("calibrate " + (work_dir() / "absent.json").string() + " " +
                                (work_dir() / "out.json").string());
        CHECK(r.exit_code == 2);
        CHECK(r.output.find("absent.json") != std::string::npos);
    }
    SUBCASE("randomized commands require a seed") {
        CHECK(run("generate " + p.calib.string() + " " + (work_dir() / "g.csv").string() +
                  " --m 10")
                  .exit_code == 2);
    }
    SUBCASE("help exits 0 everywhere") {
        CHECK(run("--help").exit_code == 0);
        for (const std::string sub :
             {"ingest", "calibrate", "generate", "train", "evaluate", "sweep", "predict"}) {
            const RunResult r = run(sub + " --help");
            CHECK(r.exit_code == 0);
            CHECK(r.output.find("Usage") != std::string::npos);
        }
    }
}

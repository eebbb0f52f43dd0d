// oxysense: calibration and neural-network inference for luminescence-quenching
// oxygen sensors. Subcommands cover the whole workflow: ingest raw phase
// measurements, calibrate the two-site model per frequency, generate synthetic
// datasets, train and sweep networks, evaluate, predict.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "oxysense/calibration.hpp"
#include "oxysense/dataset.hpp"
#include "oxysense/evaluation.hpp"
#include "oxysense/fixture.hpp"
#include "oxysense/io.hpp"
#include "oxysense/network.hpp"
#include "oxysense/quench.hpp"
#include "oxysense/rng.hpp"

using namespace oxysense;
namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr int kCurvesVersion = 1;

/// Usage/config problem: reported with exit code 2.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void require_file(const fs::path& path) {
    if (!fs::exists(path)) throw IoError("no such file: " + path.string());
}

void check_keys(const json& obj, const std::vector<std::string>& allowed,
                const std::string& where) {
    if (!obj.is_object()) throw UsageError(where + " must be a JSON object");
    for (const auto& [key, value] : obj.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw UsageError("unknown key '" + key + "' in " + where);
    }
}

json load_config(const std::string& path, const std::string& section,
                 const std::vector<std::string>& allowed) {
    if (path.empty()) return json::object();
    require_file(path);
    json doc;
    try {
        doc = json::parse(io::read_text_file(path));
    } catch (const json::exception& e) {
        throw UsageError(path + ": " + e.what());
    }
    check_keys(doc, {"train", "generate", "sweep"}, path);
    if (!doc.contains(section)) return json::object();
    check_keys(doc[section], allowed, path + " section '" + section + "'");
    return doc[section];
}

/// Pull a config value unless the flag was given on the command line.
template <typename T>
void merge(const CLI::App& cmd, const std::string& flag, const json& section,
           const std::string& key, T& value) {
    if (cmd.count(flag) > 0) return;
    if (section.contains(key)) value = section[key].get<T>();
}

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

struct RawRow {
    double o2;
    double tan_theta;
};

int cmd_ingest(const std::string& raw_path, const std::string& out_path) {
    require_file(raw_path);
    const std::string text = io::read_text_file(raw_path);

    std::vector<std::string_view> lines;
    std::string_view rest = text;
    while (!rest.empty()) {
        const std::size_t pos = rest.find('\n');
        lines.push_back(rest.substr(0, pos));
        if (pos == std::string_view::npos) break;
        rest.remove_prefix(pos + 1);
    }
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
    if (lines.empty() || std::string(lines[0]) != "frequency_hz,temperature_c,o2_percent_air,tan_theta")
        throw IoError(raw_path + ": line 1: expected header "
                      "frequency_hz,temperature_c,o2_percent_air,tan_theta");

    // group by (temperature, frequency)
    std::map<double, std::map<double, std::vector<RawRow>>> groups;
    for (std::size_t li = 1; li < lines.size(); ++li) {
        const std::string where = raw_path + ": line " + std::to_string(li + 1);
        const auto fields = io::split_fields(lines[li]);
        if (fields.size() != 4) throw IoError(where + ": expected 4 columns");
        const double hz = io::parse_double(fields[0], where);
        const double temp = io::parse_double(fields[1], where);
        const double o2 = io::parse_double(fields[2], where);
        const double tan_theta = io::parse_double(fields[3], where);
        if (!(tan_theta > 0.0))
            throw std::domain_error(where + ": tan(theta) must be > 0");
        groups[temp][hz].push_back({o2, tan_theta});
    }

    for (const auto& [temp, by_freq] : groups) {
        auto curves = ordered_json::array();
        for (const auto& [hz, rows] : by_freq) {
            const RawRow* reference = nullptr;
            for (const auto& row : rows) {
                if (row.o2 == 0.0) {
                    if (reference != nullptr)
                        throw std::domain_error("ingest: duplicate zero-oxygen reference for " +
                                                io::format_double(hz) + " Hz");
                    reference = &row;
                }
            }
            if (reference == nullptr)
                throw std::domain_error("ingest: no zero-oxygen reference for " +
                                        io::format_double(hz) + " Hz (temperature " +
                                        io::format_double(temp) + " C)");
            std::vector<RawRow> sorted = rows;
            std::sort(sorted.begin(), sorted.end(),
                      [](const RawRow& a, const RawRow& b) { return a.o2 < b.o2; });
            auto points = ordered_json::array();
            for (const auto& row : sorted) {
                points.push_back({{"o2_percent_air", row.o2},
                                  {"r", row.o2 == 0.0 ? 1.0 : row.tan_theta / reference->tan_theta}});
            }
            ordered_json curve;
            curve["frequency_hz"] = hz;
            curve["points"] = std::move(points);
            curves.push_back(std::move(curve));
        }
        ordered_json bundle;
        bundle["version"] = kCurvesVersion;
        bundle["temperature_c"] = temp;
        bundle["curves"] = std::move(curves);

        fs::path path = out_path;
        if (groups.size() > 1) {
            fs::path base(out_path);
            path = base.parent_path() /
                   (base.stem().string() + "_T" + io::format_double(temp) + base.extension().string());
        }
        io::write_text_file(path, bundle.dump() + "\n");
        std::printf("wrote %zu curves at %s C to %s\n", by_freq.size(),
                    io::format_double(temp).c_str(), path.string().c_str());
    }
    return 0;
}

// ---------------------------------------------------------------------------
// calibrate
// ---------------------------------------------------------------------------

std::vector<QuenchCurve> read_curve_bundle(const std::string& path) {
    require_file(path);
    json doc;
    try {
        doc = json::parse(io::read_text_file(path));
    } catch (const json::exception& e) {
        throw IoError(path + ": " + e.what());
    }
    try {
        if (!doc.contains("version") || doc["version"].get<int>() != kCurvesVersion)
            throw IoError(path + ": unsupported curves file version");
        const Temperature temperature(doc.at("temperature_c").get<double>());
        std::vector<QuenchCurve> curves;
        for (const auto& jc : doc.at("curves")) {
            const double hz = jc.at("frequency_hz").get<double>();
            const auto& points = jc.at("points");
            Eigen::ArrayXd c(points.size()), r(points.size());
            Eigen::Index i = 0;
            for (const auto& p : points) {
                c(i) = p.at("o2_percent_air").get<double>();
                r(i) = p.at("r").get<double>();
                ++i;
            }
            curves.emplace_back(ModulationFrequency::from_hz(hz), temperature, c, r);
        }
        return curves;
    } catch (const json::exception& e) {
        throw IoError(path + ": " + e.what());
    }
}

int cmd_calibrate(const std::string& curves_path, const std::string& out_path) {
    const std::vector<QuenchCurve> curves = read_curve_bundle(curves_path);
    const CalibrationTable table = build_calibration(curves);
    write_calibration(table, out_path);
    std::size_t failed = 0;
    for (const auto& entry : table.entries()) {
        if (!entry.fit.converged) {
            ++failed;
            std::fprintf(stderr, "warning: fit at %s Hz did not converge\n",
                         io::format_double(entry.omega.hz()).c_str());
        }
    }
    std::printf("calibrated %zu frequencies -> %s\n", table.entries().size(), out_path.c_str());
    return failed == 0 ? 0 : 1;
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

struct GenerateArgs {
    std::string calib_path, out_path, config_path;
    std::uint64_t m = 5000;
    double c_lo = 0.0, c_hi = 110.0;
    std::uint64_t seed = 0;
    bool mismatch = false;
    double sigma = 0.002;
    std::string bias = "auto";
    std::vector<double> concentrations;
};

int cmd_generate(const CLI::App& cmd, GenerateArgs args) {
    const json section = load_config(args.config_path, "generate",
                                     {"m", "c_lo", "c_hi", "seed", "mismatch", "sigma", "bias",
                                      "concentrations"});
    merge(cmd, "--m", section, "m", args.m);
    merge(cmd, "--c-lo", section, "c_lo", args.c_lo);
    merge(cmd, "--c-hi", section, "c_hi", args.c_hi);
    merge(cmd, "--mismatch", section, "mismatch", args.mismatch);
    merge(cmd, "--sigma", section, "sigma", args.sigma);
    merge(cmd, "--concentrations", section, "concentrations", args.concentrations);
    if (cmd.count("--bias") == 0 && section.contains("bias")) {
        args.bias = section["bias"].is_string() ? section["bias"].get<std::string>()
                                                : io::format_double(section["bias"].get<double>());
    }
    if (cmd.count("--seed") == 0) {
        if (!section.contains("seed"))
            throw UsageError("generate: --seed is required (flag or config)");
        args.seed = section["seed"].get<std::uint64_t>();
    }

    require_file(args.calib_path);
    const CalibrationTable table = read_calibration(args.calib_path);
    const Eigen::VectorXd grid = table.frequencies_hz();

    Dataset dataset = [&] {
        if (args.mismatch) {
            MismatchSpec spec;
            spec.ratio_noise_sigma = args.sigma;
            spec.curvature_bias = args.bias == "auto" ? calibrate_curvature_bias(table, grid)
                                                      : io::parse_double(args.bias, "--bias");
            const std::vector<double> conc =
                args.concentrations.empty() ? default_test_concentrations() : args.concentrations;
            return generate_mismatch_test(table, grid, conc, spec, args.seed);
        }
        return generate_synthetic(table, grid, args.m, args.c_lo, args.c_hi, args.seed);
    }();
    write_dataset(dataset, args.out_path);
    std::printf("wrote %zu observations (%s) -> %s\n", dataset.size(),
                to_string(dataset.provenance()).c_str(), args.out_path.c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string data_path, out_path, config_path;
    int layers = 3;
    int neurons = 50;
    TrainConfig cfg{};
    double train_fraction = 0.8;
};

int cmd_train(const CLI::App& cmd, TrainArgs args) {
    const json section = load_config(args.config_path, "train",
                                     {"layers", "neurons", "epochs", "learning_rate",
                                      "train_fraction", "seed", "log_every"});
    merge(cmd, "--layers", section, "layers", args.layers);
    merge(cmd, "--neurons", section, "neurons", args.neurons);
    merge(cmd, "--epochs", section, "epochs", args.cfg.epochs);
    merge(cmd, "--learning-rate", section, "learning_rate", args.cfg.learning_rate);
    merge(cmd, "--train-fraction", section, "train_fraction", args.train_fraction);
    merge(cmd, "--log-every", section, "log_every", args.cfg.log_every);
    if (cmd.count("--seed") == 0) {
        if (!section.contains("seed"))
            throw UsageError("train: --seed is required (flag or config)");
        args.cfg.seed = section["seed"].get<std::uint64_t>();
    }

    require_file(args.data_path);
    const Dataset data = read_dataset(args.data_path);
    const auto [train_set, dev_set] = split(data, args.train_fraction, args.cfg.seed);

    const NetworkSpec spec{data.frequencies_hz().size(), args.layers, args.neurons, 110.0};
    NetworkModel model = init_model(spec, args.cfg.seed);
    AdamState state = AdamState::zeros_like(model);
    const TrainReport report = continue_training(model, state, train_set, args.cfg);
    save_model(model, args.out_path, &state, &args.cfg);

    std::printf("trained %dx%d for %ld epochs in %.1f s (final cost %.6g)\n", args.layers,
                args.neurons, args.cfg.epochs, report.duration_seconds, report.final_cost);
    std::printf("MAE_train = %.6g %% air\n", mae(model, train_set));
    std::printf("MAE_dev   = %.6g %% air\n", mae(model, dev_set));
    return 0;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

int cmd_evaluate(const std::string& model_path, const std::string& data_path,
                 const std::string& out_path, std::string profile_path,
                 std::vector<double> bins) {
    require_file(model_path);
    require_file(data_path);
    const LoadedModel loaded = load_model(model_path);
    const Dataset data = read_dataset(data_path);

    const auto table = ae_per_observation(loaded.model, data);
    write_ae_csv(table, out_path);

    if (bins.empty()) {
        for (double edge = 0.0; edge <= 110.0; edge += 10.0) bins.push_back(edge);
    }
    if (profile_path.empty()) {
        fs::path p(out_path);
        profile_path = (p.parent_path() / (p.stem().string() + ".profile.csv")).string();
    }
    write_profile_csv(concentration_profile(loaded.model, data, bins), profile_path);

    std::printf("MAE = %.6g %% air over %zu observations (temperature %s C)\n",
                mae(loaded.model, data), data.size(),
                io::format_double(data.temperature().celsius()).c_str());
    std::printf("AE table -> %s\nprofile  -> %s\n", out_path.c_str(), profile_path.c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

struct SweepArgs {
    std::string train_path, dev_path, test_path, out_path, config_path;
    SweepGrid grid{};
    double train_fraction = 0.8;
    int workers = 1;
};

int cmd_sweep(const CLI::App& cmd, SweepArgs args) {
    const json section = load_config(args.config_path, "sweep",
                                     {"layers", "neurons", "epochs", "learning_rate",
                                      "train_fraction", "seed", "workers"});
    merge(cmd, "--layers", section, "layers", args.grid.layer_counts);
    merge(cmd, "--neurons", section, "neurons", args.grid.neuron_counts);
    merge(cmd, "--epochs", section, "epochs", args.grid.trial_config.epochs);
    merge(cmd, "--learning-rate", section, "learning_rate", args.grid.trial_config.learning_rate);
    merge(cmd, "--train-fraction", section, "train_fraction", args.train_fraction);
    merge(cmd, "--workers", section, "workers", args.workers);
    if (cmd.count("--seed") == 0) {
        if (!section.contains("seed"))
            throw UsageError("sweep: --seed is required (flag or config)");
        args.grid.base_seed = section["seed"].get<std::uint64_t>();
    }

    require_file(args.train_path);
    require_file(args.test_path);
    const Dataset test_set = read_dataset(args.test_path);

    Dataset full = read_dataset(args.train_path);
    auto [train_set, dev_set] = [&] {
        if (!args.dev_path.empty()) {
            require_file(args.dev_path);
            return std::pair<Dataset, Dataset>(std::move(full), read_dataset(args.dev_path));
        }
        return split(full, args.train_fraction, args.grid.base_seed);
    }();

    const EvalReport report = run_sweep(args.grid, train_set, dev_set, test_set, args.workers);
    write_sweep_csv(report, args.out_path);
    std::printf("%s", sweep_summary(report).c_str());
    std::printf("sweep report -> %s\n", args.out_path.c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

int cmd_predict(const std::string& model_path, const std::vector<double>& ratios,
                const std::string& input_path) {
    require_file(model_path);
    const LoadedModel loaded = load_model(model_path);
    const Eigen::Index dim = loaded.model.spec.input_dim;

    if (!input_path.empty()) {
        require_file(input_path);
        const Dataset data = read_dataset(input_path);
        const Eigen::VectorXd preds = forward_batch(loaded.model, data.features_cols());
        for (Eigen::Index j = 0; j < preds.size(); ++j) std::printf("%.6g\n", preds(j));
        return 0;
    }
    if (static_cast<Eigen::Index>(ratios.size()) != dim)
        throw UsageError("predict: expected " + std::to_string(dim) + " ratio values, got " +
                         std::to_string(ratios.size()));
    Eigen::VectorXd x(dim);
    for (Eigen::Index i = 0; i < dim; ++i) x(i) = ratios[static_cast<std::size_t>(i)];
    std::printf("%.6g\n", forward(loaded.model, x));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"oxysense: luminescence-quenching oxygen sensor calibration "
                 "and neural-network inference"};
    app.require_subcommand(1);

    std::function<int()> action;

    // ingest
    {
        auto* sub = app.add_subcommand("ingest", "Normalize raw phase measurements into quench curves");
        auto raw = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        sub->add_option("raw", *raw, "raw phase CSV (frequency_hz,temperature_c,o2_percent_air,tan_theta)")
            ->required();
        sub->add_option("out", *out, "output curves JSON (per-temperature bundles)")->required();
        sub->callback([=, &action] { action = [=] { return cmd_ingest(*raw, *out); }; });
    }
    // calibrate
    {
        auto* sub = app.add_subcommand("calibrate", "Fit the two-site model per frequency");
        auto curves = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        sub->add_option("curves", *curves, "curves JSON from ingest")->required();
        sub->add_option("out", *out, "output calibration JSON")->required();
        sub->callback([=, &action] { action = [=] { return cmd_calibrate(*curves, *out); }; });
    }
    // generate
    {
        auto* sub = app.add_subcommand("generate", "Generate a synthetic dataset from a calibration");
        auto args = std::make_shared<GenerateArgs>();
        sub->add_option("calibration", args->calib_path, "calibration JSON")->required();
        sub->add_option("out", args->out_path, "output dataset CSV")->required();
        sub->add_option("--m", args->m, "number of observations (default 5000)");
        sub->add_option("--c-lo", args->c_lo, "lower concentration bound, % air (default 0)");
        sub->add_option("--c-hi", args->c_hi, "upper concentration bound, % air (default 110)");
        sub->add_option("--seed", args->seed, "generator seed (required)");
        sub->add_flag("--mismatch", args->mismatch,
                      "emulate an experimental test set (noise + concentration-dependent bias)");
        sub->add_option("--sigma", args->sigma, "mismatch ratio noise sigma (default 0.002)");
        sub->add_option("--bias", args->bias,
                        "mismatch curvature bias, or 'auto' to calibrate for a 2 % air deviation "
                        "at 100 % air");
        sub->add_option("--concentrations", args->concentrations,
                        "mismatch test concentrations, % air")
            ->delimiter(',');
        sub->add_option("--config", args->config_path, "JSON config file");
        sub->callback([=, &action] { action = [=, s = sub] { return cmd_generate(*s, *args); }; });
    }
    // train
    {
        auto* sub = app.add_subcommand("train", "Split a dataset and train one network");
        auto args = std::make_shared<TrainArgs>();
        sub->add_option("data", args->data_path, "dataset CSV")->required();
        sub->add_option("out", args->out_path, "output model JSON")->required();
        sub->add_option("--layers", args->layers, "hidden layers (default 3)");
        sub->add_option("--neurons", args->neurons, "neurons per hidden layer (default 50)");
        sub->add_option("--epochs", args->cfg.epochs, "training epochs (default 100000)");
        sub->add_option("--learning-rate", args->cfg.learning_rate, "Adam learning rate (default 0.001)");
        sub->add_option("--train-fraction", args->train_fraction, "train split fraction (default 0.8)");
        sub->add_option("--log-every", args->cfg.log_every, "cost trace interval (default 1000)");
        sub->add_option("--seed", args->cfg.seed, "seed for split and initialization (required)");
        sub->add_option("--config", args->config_path, "JSON config file");
        sub->callback([=, &action] { action = [=, s = sub] { return cmd_train(*s, *args); }; });
    }
    // evaluate
    {
        auto* sub = app.add_subcommand("evaluate", "Evaluate a model on a dataset");
        auto model = std::make_shared<std::string>();
        auto data = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        auto profile = std::make_shared<std::string>();
        auto bins = std::make_shared<std::vector<double>>();
        sub->add_option("model", *model, "model JSON")->required();
        sub->add_option("data", *data, "dataset CSV")->required();
        sub->add_option("out", *out, "output AE table CSV")->required();
        sub->add_option("--profile-out", *profile, "profile CSV path (default <out>.profile.csv)");
        sub->add_option("--bins", *bins, "profile bin edges, % air (default 0,10,...,110)")
            ->delimiter(',');
        sub->callback([=, &action] {
            action = [=] { return cmd_evaluate(*model, *data, *out, *profile, *bins); };
        });
    }
    // sweep
    {
        auto* sub = app.add_subcommand("sweep", "Train the architecture grid and report MAEs");
        auto args = std::make_shared<SweepArgs>();
        sub->add_option("train", args->train_path, "training dataset CSV (split if --dev absent)")
            ->required();
        sub->add_option("--dev", args->dev_path, "development dataset CSV");
        sub->add_option("--test", args->test_path, "test dataset CSV")->required();
        sub->add_option("--out", args->out_path, "output report CSV")->required();
        sub->add_option("--layers", args->grid.layer_counts, "layer counts (default 1,2,3)")
            ->delimiter(',');
        sub->add_option("--neurons", args->grid.neuron_counts,
                        "neuron counts (default 3,5,10,20,30,50)")
            ->delimiter(',');
        sub->add_option("--epochs", args->grid.trial_config.epochs,
                        "epochs per trial (default 20000)");
        sub->add_option("--learning-rate", args->grid.trial_config.learning_rate,
                        "Adam learning rate (default 0.001)");
        sub->add_option("--train-fraction", args->train_fraction, "split fraction (default 0.8)");
        sub->add_option("--workers", args->workers, "concurrent trials (default 1)");
        sub->add_option("--seed", args->grid.base_seed, "base seed (required)");
        sub->add_option("--config", args->config_path, "JSON config file");
        sub->callback([=, &action] { action = [=, s = sub] { return cmd_sweep(*s, *args); }; });
    }
    // predict
    {
        auto* sub = app.add_subcommand("predict", "Predict oxygen concentration from ratio vectors");
        auto model = std::make_shared<std::string>();
        auto ratios = std::make_shared<std::vector<double>>();
        auto input = std::make_shared<std::string>();
        sub->add_option("model", *model, "model JSON")->required();
        sub->add_option("ratios", *ratios, "ratio values (one per model input)");
        sub->add_option("--input", *input, "dataset CSV to predict row by row");
        sub->callback([=, &action] {
            action = [=] { return cmd_predict(*model, *ratios, *input); };
        });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        return action();
    } catch (const UsageError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const fs::filesystem_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

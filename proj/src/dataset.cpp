#include "oxysense/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "oxysense/io.hpp"
#include "oxysense/rng.hpp"

namespace oxysense {

namespace {

/// Parameters sampled at every grid frequency; validates the grid against the
/// spline domain.
std::vector<TwoSiteParams> params_on_grid(const CalibrationTable& table,
                                          const Eigen::VectorXd& grid_hz) {
    if (grid_hz.size() == 0) throw std::invalid_argument("frequency grid must not be empty");
    std::vector<TwoSiteParams> params;
    params.reserve(static_cast<std::size_t>(grid_hz.size()));
    for (Eigen::Index i = 0; i < grid_hz.size(); ++i) {
        if (i > 0 && !(grid_hz(i) > grid_hz(i - 1)))
            throw std::invalid_argument("frequency grid must be strictly increasing");
        const ModulationFrequency omega = ModulationFrequency::from_hz(grid_hz(i));
        if (omega.angular() < table.curves().omega_min() ||
            omega.angular() > table.curves().omega_max())
            throw std::domain_error("frequency grid leaves the calibrated spline domain");
        params.push_back(sample_params(table.curves(), omega));
    }
    return params;
}

Eigen::VectorXd ratios_for(const std::vector<TwoSiteParams>& params, double c) {
    Eigen::VectorXd r(static_cast<Eigen::Index>(params.size()));
    for (std::size_t k = 0; k < params.size(); ++k)
        r(static_cast<Eigen::Index>(k)) = phase_ratio_r(params[k], Concentration(c));
    return r;
}

constexpr int kDatasetVersion = 1;

}  // namespace

std::string to_string(Provenance p) {
    switch (p) {
        case Provenance::synthetic: return "synthetic";
        case Provenance::experimental: return "experimental";
        case Provenance::mismatch: return "mismatch";
    }
    throw std::logic_error("unknown provenance");
}

Provenance provenance_from_string(const std::string& s) {
    if (s == "synthetic") return Provenance::synthetic;
    if (s == "experimental") return Provenance::experimental;
    if (s == "mismatch") return Provenance::mismatch;
    throw std::invalid_argument("unknown provenance '" + s + "'");
}

Dataset::Dataset(Eigen::VectorXd frequencies_hz, Temperature temperature,
                 std::vector<Observation> observations, Provenance provenance,
                 std::optional<std::uint64_t> seed, nlohmann::json generator_info)
    : frequencies_hz_(std::move(frequencies_hz)),
      temperature_(temperature),
      observations_(std::move(observations)),
      provenance_(provenance),
      seed_(seed),
      generator_info_(std::move(generator_info)) {
    for (Eigen::Index i = 1; i < frequencies_hz_.size(); ++i) {
        if (!(frequencies_hz_(i) > frequencies_hz_(i - 1)))
            throw std::invalid_argument("Dataset: frequency grid must be strictly increasing");
    }
    for (const auto& obs : observations_) {
        if (obs.ratios.size() != frequencies_hz_.size())
            throw std::invalid_argument("Dataset: observation does not match the frequency grid");
        if (!((obs.ratios.array() > 0.0).all() && (obs.ratios.array() <= 1.0).all()))
            throw std::invalid_argument("Dataset: ratios must lie in (0, 1]");
        if (!(obs.temperature == temperature_))
            throw std::invalid_argument("Dataset: observations carry mixed temperatures");
    }
}

Eigen::MatrixXd Dataset::features_cols() const {
    Eigen::MatrixXd x(frequencies_hz_.size(), static_cast<Eigen::Index>(observations_.size()));
    for (std::size_t j = 0; j < observations_.size(); ++j)
        x.col(static_cast<Eigen::Index>(j)) = observations_[j].ratios;
    return x;
}

Eigen::VectorXd Dataset::labels() const {
    Eigen::VectorXd y(static_cast<Eigen::Index>(observations_.size()));
    for (std::size_t j = 0; j < observations_.size(); ++j)
        y(static_cast<Eigen::Index>(j)) = observations_[j].o2.percent_air();
    return y;
}

Dataset generate_synthetic(const CalibrationTable& table, const Eigen::VectorXd& grid_hz,
                           std::size_t m, double c_lo, double c_hi, std::uint64_t seed) {
    if (m < 1) throw std::invalid_argument("generate_synthetic: m must be >= 1");
    if (!(c_lo >= 0.0) || !(c_lo < c_hi))
        throw std::invalid_argument("generate_synthetic: need 0 <= c_lo < c_hi");
    const std::vector<TwoSiteParams> params = params_on_grid(table, grid_hz);

    auto stream = rng::make_stream(seed, "generate");
    std::vector<Observation> observations;
    observations.reserve(m);
    for (std::size_t j = 0; j < m; ++j) {
        const double c = stream.uniform(c_lo, c_hi);
        observations.push_back({Concentration(c), table.temperature(), ratios_for(params, c)});
    }
    nlohmann::json info{{"m", m}, {"c_lo", c_lo}, {"c_hi", c_hi}};
    return Dataset(grid_hz, table.temperature(), std::move(observations), Provenance::synthetic,
                   seed, std::move(info));
}

std::pair<Dataset, Dataset> split(const Dataset& dataset, double train_fraction,
                                  std::uint64_t seed) {
    if (dataset.size() == 0) throw std::invalid_argument("split: dataset is empty");
    if (!(train_fraction > 0.0) || !(train_fraction < 1.0))
        throw std::invalid_argument("split: train_fraction must lie in (0, 1)");

    const std::size_t m = dataset.size();
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto stream = rng::make_stream(seed, "split");
    for (std::size_t i = m; i > 1; --i) {
        const auto j = static_cast<std::size_t>(stream.uniform(0.0, static_cast<double>(i)));
        std::swap(order[i - 1], order[j]);
    }

    const std::size_t n_train =
        static_cast<std::size_t>(std::floor(static_cast<double>(m) * train_fraction));
    std::vector<Observation> train_obs, dev_obs;
    train_obs.reserve(n_train);
    dev_obs.reserve(m - n_train);
    for (std::size_t i = 0; i < m; ++i) {
        auto& bucket = i < n_train ? train_obs : dev_obs;
        bucket.push_back(dataset.observations()[order[i]]);
    }
    return {Dataset(dataset.frequencies_hz(), dataset.temperature(), std::move(train_obs),
                    dataset.provenance(), dataset.seed(), dataset.generator_info()),
            Dataset(dataset.frequencies_hz(), dataset.temperature(), std::move(dev_obs),
                    dataset.provenance(), dataset.seed(), dataset.generator_info())};
}

Dataset generate_mismatch_test(const CalibrationTable& table, const Eigen::VectorXd& grid_hz,
                               const std::vector<double>& concentrations,
                               const MismatchSpec& spec, std::uint64_t seed) {
    if (concentrations.empty())
        throw std::invalid_argument("generate_mismatch_test: no concentrations given");
    if (!(spec.ratio_noise_sigma >= 0.0))
        throw std::invalid_argument("generate_mismatch_test: sigma must be >= 0");
    const std::vector<TwoSiteParams> params = params_on_grid(table, grid_hz);

    auto stream = rng::make_stream(seed, "mismatch");
    std::vector<Observation> observations;
    observations.reserve(concentrations.size());
    for (const double c : concentrations) {
        Eigen::VectorXd r = ratios_for(params, c);
        const double bias_factor = 1.0 + spec.curvature_bias * (c / 100.0) * (c / 100.0);
        for (Eigen::Index k = 0; k < r.size(); ++k) {
            const double perturbed = r(k) * bias_factor + spec.ratio_noise_sigma * stream.normal();
            r(k) = std::clamp(perturbed, std::numeric_limits<double>::min(), 1.0);
        }
        observations.push_back({Concentration(c), table.temperature(), std::move(r)});
    }
    nlohmann::json info{{"ratio_noise_sigma", spec.ratio_noise_sigma},
                        {"curvature_bias", spec.curvature_bias},
                        {"concentrations", concentrations}};
    return Dataset(grid_hz, table.temperature(), std::move(observations), Provenance::mismatch,
                   seed, std::move(info));
}

double calibrate_curvature_bias(const CalibrationTable& table, const Eigen::VectorXd& grid_hz,
                                double target_percent_air, double at_c) {
    if (!(target_percent_air > 0.0) || !(at_c > 0.0))
        throw std::invalid_argument("calibrate_curvature_bias: target and at_c must be > 0");
    const std::vector<TwoSiteParams> params = params_on_grid(table, grid_hz);
    const Eigen::VectorXd base = ratios_for(params, at_c);

    // concentration-equivalent reading of a perturbed ratio vector: the
    // concentration whose model ratios are closest in least squares
    const auto invert = [&](const Eigen::VectorXd& target) {
        double lo = 0.0, hi = std::max(110.0, at_c);
        const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
        double a = hi - phi * (hi - lo), b = lo + phi * (hi - lo);
        double fa = (ratios_for(params, a) - target).squaredNorm();
        double fb = (ratios_for(params, b) - target).squaredNorm();
        for (int i = 0; i < 120; ++i) {
            if (fa < fb) {
                hi = b;
                b = a;
                fb = fa;
                a = hi - phi * (hi - lo);
                fa = (ratios_for(params, a) - target).squaredNorm();
            } else {
                lo = a;
                a = b;
                fa = fb;
                b = lo + phi * (hi - lo);
                fb = (ratios_for(params, b) - target).squaredNorm();
            }
        }
        return 0.5 * (lo + hi);
    };

    const auto deviation = [&](double bias) {
        const Eigen::VectorXd perturbed =
            (base.array() * (1.0 + bias)).cwiseMin(1.0).matrix();
        return std::abs(invert(perturbed) - at_c);
    };

    // deviation grows monotonically with the bias; bisect on it
    double lo = 0.0, hi = 0.5;
    if (deviation(hi) < target_percent_air)
        throw std::domain_error("calibrate_curvature_bias: target deviation unreachable");
    for (int i = 0; i < 60; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (deviation(mid) < target_percent_air)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

std::vector<double> default_test_concentrations() {
    std::vector<double> c(10);
    for (int i = 0; i < 10; ++i) c[static_cast<std::size_t>(i)] = 100.0 * i / 9.0;
    return c;
}

MismatchSpec default_mismatch_spec(const CalibrationTable& table, const Eigen::VectorXd& grid_hz) {
    return MismatchSpec{0.002, calibrate_curvature_bias(table, grid_hz, 2.0, 100.0)};
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& csv_path) {
    std::string body = "o2_percent_air,temperature_c";
    for (Eigen::Index k = 0; k < dataset.frequencies_hz().size(); ++k)
        body += ",r_" + std::to_string(k + 1);
    body += "\n";
    for (const auto& obs : dataset.observations()) {
        body += io::format_double(obs.o2.percent_air());
        body += ',';
        body += io::format_double(obs.temperature.celsius());
        for (Eigen::Index k = 0; k < obs.ratios.size(); ++k) {
            body += ',';
            body += io::format_double(obs.ratios(k));
        }
        body += '\n';
    }
    io::write_text_file(csv_path, body);

    auto hz = nlohmann::ordered_json::array();
    for (Eigen::Index k = 0; k < dataset.frequencies_hz().size(); ++k)
        hz.push_back(dataset.frequencies_hz()(k));
    nlohmann::ordered_json meta;
    meta["version"] = kDatasetVersion;
    meta["frequencies_hz"] = std::move(hz);
    meta["provenance"] = to_string(dataset.provenance());
    if (dataset.seed())
        meta["seed"] = *dataset.seed();
    else
        meta["seed"] = nullptr;
    meta["generator"] = dataset.generator_info();
    std::filesystem::path meta_path = csv_path;
    meta_path.replace_extension(".meta.json");
    io::write_text_file(meta_path, meta.dump() + "\n");
}

Dataset read_dataset(const std::filesystem::path& csv_path) {
    std::filesystem::path meta_path = csv_path;
    meta_path.replace_extension(".meta.json");
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(io::read_text_file(meta_path));
    } catch (const nlohmann::json::exception& e) {
        throw IoError(meta_path.string() + ": " + e.what());
    }

    Eigen::VectorXd grid;
    Provenance provenance = Provenance::synthetic;
    std::optional<std::uint64_t> seed;
    nlohmann::json generator_info = nlohmann::json::object();
    try {
        if (!meta.contains("version") || meta["version"].get<int>() != kDatasetVersion)
            throw IoError(meta_path.string() + ": unsupported dataset version");
        const auto hz = meta.at("frequencies_hz").get<std::vector<double>>();
        grid.resize(static_cast<Eigen::Index>(hz.size()));
        for (std::size_t k = 0; k < hz.size(); ++k) grid(static_cast<Eigen::Index>(k)) = hz[k];
        provenance = provenance_from_string(meta.at("provenance").get<std::string>());
        if (meta.contains("seed") && !meta["seed"].is_null())
            seed = meta["seed"].get<std::uint64_t>();
        if (meta.contains("generator")) generator_info = meta["generator"];
    } catch (const nlohmann::json::exception& e) {
        throw IoError(meta_path.string() + ": " + e.what());
    }

    const std::string text = io::read_text_file(csv_path);
    std::vector<std::string_view> lines;
    {
        std::string_view rest = text;
        while (!rest.empty()) {
            const std::size_t pos = rest.find('\n');
            lines.push_back(rest.substr(0, pos));
            if (pos == std::string_view::npos) break;
            rest.remove_prefix(pos + 1);
        }
        while (!lines.empty() && lines.back().empty()) lines.pop_back();
    }
    if (lines.empty()) throw IoError(csv_path.string() + ": empty file");

    const Eigen::Index n = grid.size();
    std::string expected_header = "o2_percent_air,temperature_c";
    for (Eigen::Index k = 0; k < n; ++k) expected_header += ",r_" + std::to_string(k + 1);
    if (std::string(lines[0]) != expected_header)
        throw IoError(csv_path.string() + ": line 1: malformed header");

    std::vector<Observation> observations;
    observations.reserve(lines.size() - 1);
    for (std::size_t li = 1; li < lines.size(); ++li) {
        const std::string where = csv_path.string() + ": line " + std::to_string(li + 1);
        const auto fields = io::split_fields(lines[li]);
        if (static_cast<Eigen::Index>(fields.size()) != n + 2)
            throw IoError(where + ": expected " + std::to_string(n + 2) + " columns, got " +
                          std::to_string(fields.size()));
        const double o2 = io::parse_double(fields[0], where);
        const double temp = io::parse_double(fields[1], where);
        Eigen::VectorXd ratios(n);
        for (Eigen::Index k = 0; k < n; ++k) {
            ratios(k) = io::parse_double(fields[static_cast<std::size_t>(k) + 2], where);
            if (!(ratios(k) > 0.0) || !(ratios(k) <= 1.0))
                throw IoError(where + ": ratio r_" + std::to_string(k + 1) + " = " +
                              std::string(fields[static_cast<std::size_t>(k) + 2]) +
                              " outside (0, 1]");
        }
        if (!(o2 >= 0.0)) throw IoError(where + ": concentration must be >= 0");
        observations.push_back({Concentration(o2), Temperature(temp), std::move(ratios)});
    }
    if (observations.empty()) throw IoError(csv_path.string() + ": no observations");

    const Temperature dataset_temperature = observations[0].temperature;
    try {
        return Dataset(grid, dataset_temperature, std::move(observations), provenance, seed,
                       std::move(generator_info));
    } catch (const std::invalid_argument& e) {
        throw IoError(csv_path.string() + ": " + e.what());
    }
}

}  // namespace oxysense

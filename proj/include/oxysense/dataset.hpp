#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "oxysense/calibration.hpp"
#include "oxysense/units.hpp"

namespace oxysense {

/// One labeled sample: oxygen concentration, temperature, and the ratio
/// vector r over the pipeline frequency grid. Ratios lie in (0, 1].
struct Observation {
    Concentration o2;
    Temperature temperature;
    Eigen::VectorXd ratios;
};

enum class Provenance { synthetic, experimental, mismatch };

std::string to_string(Provenance p);
Provenance provenance_from_string(const std::string& s);

/// An immutable set of observations over a common frequency grid (Hz,
/// strictly increasing) at a common temperature.
class Dataset {
public:
    Dataset(Eigen::VectorXd frequencies_hz, Temperature temperature,
            std::vector<Observation> observations, Provenance provenance,
            std::optional<std::uint64_t> seed,
            nlohmann::json generator_info = nlohmann::json::object());

    const Eigen::VectorXd& frequencies_hz() const { return frequencies_hz_; }
    const Temperature& temperature() const { return temperature_; }
    const std::vector<Observation>& observations() const { return observations_; }
    Provenance provenance() const { return provenance_; }
    std::optional<std::uint64_t> seed() const { return seed_; }
    /// Parameters the dataset was generated with, echoed into the sidecar.
    const nlohmann::json& generator_info() const { return generator_info_; }
    std::size_t size() const { return observations_.size(); }

    /// Feature matrix with one observation per column (grid length x m).
    Eigen::MatrixXd features_cols() const;
    Eigen::VectorXd labels() const;

private:
    Eigen::VectorXd frequencies_hz_;
    Temperature temperature_;
    std::vector<Observation> observations_;
    Provenance provenance_;
    std::optional<std::uint64_t> seed_;
    nlohmann::json generator_info_;
};

/// Perturbation applied to model ratios when emulating experimental test
/// data: additive Gaussian noise plus a smooth multiplicative bias
/// (1 + curvature_bias * (c/100)^2) that grows with concentration.
struct MismatchSpec {
    double ratio_noise_sigma = 0.002;
    double curvature_bias = 0.0;
};

/// m observations with labels drawn i.i.d. uniform on [c_lo, c_hi] from the
/// stream (seed, "generate"); ratios via sample_params + phase_ratio_r.
Dataset generate_synthetic(const CalibrationTable& table, const Eigen::VectorXd& grid_hz,
                           std::size_t m = 5000, double c_lo = 0.0, double c_hi = 110.0,
                           std::uint64_t seed = 0);

/// Random split by the stream (seed, "split"): the first
/// floor(m * train_fraction) of a seeded permutation go to train.
std::pair<Dataset, Dataset> split(const Dataset& dataset, double train_fraction,
                                  std::uint64_t seed);

/// Test set at explicit concentrations with mismatch perturbation; noise from
/// the stream (seed, "mismatch"). Ratios are clamped into (0, 1].
Dataset generate_mismatch_test(const CalibrationTable& table, const Eigen::VectorXd& grid_hz,
                               const std::vector<double>& concentrations,
                               const MismatchSpec& spec, std::uint64_t seed);

/// Finds the curvature bias whose induced model deviation at concentration
/// at_c equals target_percent_air in concentration units (the bias-perturbed
/// ratio vector, inverted through the noiseless model, lands that far from
/// at_c). Bisection on the bias; inner inversion by golden-section search.
double calibrate_curvature_bias(const CalibrationTable& table, const Eigen::VectorXd& grid_hz,
                                double target_percent_air = 2.0, double at_c = 100.0);

/// Ten concentrations evenly spaced over [0, 100] % air.
std::vector<double> default_test_concentrations();

/// Default mismatch: sigma = 0.002 plus the calibrated curvature bias.
MismatchSpec default_mismatch_spec(const CalibrationTable& table, const Eigen::VectorXd& grid_hz);

/// Dataset file: CSV with header o2_percent_air,temperature_c,r_1,...,r_N and
/// full round-trip precision, plus a .meta.json sidecar (version,
/// frequencies_hz, provenance, seed, generator parameters).
void write_dataset(const Dataset& dataset, const std::filesystem::path& csv_path);
Dataset read_dataset(const std::filesystem::path& csv_path);

}  // namespace oxysense

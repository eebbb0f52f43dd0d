#pragma once

#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "oxysense/calibration.hpp"
#include "oxysense/quench.hpp"

namespace oxysense::fixture {

/// The demo sensor model shipped with the repository: a smooth two-site
/// parameter triple over 16 log-spaced frequencies from 500 Hz to 16 kHz at
/// 45 C. Used by the examples, the tests, and the acceptance pipeline.

inline constexpr double temperature_c = 45.0;
inline constexpr double tau0_seconds = 4.0e-5;  // unquenched lifetime of the demo indicator

/// 16 log-spaced frequencies, 500 Hz .. 16 kHz (ratio 2^(1/3) per step).
Eigen::VectorXd frequency_grid_hz();

/// Smooth parameter curves: f rises 0.80 -> 0.90, ksv1 falls 0.030 -> 0.020
/// (% air)^-1, ksv2 = ksv1 / 10, over log-frequency.
TwoSiteParams params_at_hz(double hz);

/// Truth calibration table at the 16 grid knots (no fitting involved).
CalibrationTable make_calibration();

/// Concentrations of the demo quench curves, % air.
std::vector<double> calibration_concentrations();

/// Writes the raw phase measurement fixture: tan(theta) over
/// (frequency, concentration) at 45 C, with the zero-oxygen reference rows.
void write_raw_phase_csv(const std::filesystem::path& path);

}  // namespace oxysense::fixture

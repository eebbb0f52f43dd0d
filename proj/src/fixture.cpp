#include "oxysense/fixture.hpp"

#include <cmath>
#include <string>

#include "oxysense/io.hpp"
#include "oxysense/quench.hpp"
#include "oxysense/units.hpp"

namespace oxysense::fixture {

Eigen::VectorXd frequency_grid_hz() {
    Eigen::VectorXd hz(16);
    for (Eigen::Index k = 0; k < 16; ++k) {
        hz(k) = 500.0 * std::pow(2.0, static_cast<double>(k) * 5.0 / 15.0);
    }
    return hz;
}

TwoSiteParams params_at_hz(double hz) {
    const double x = std::log(hz / 500.0) / std::log(16000.0 / 500.0);  // 0 at 500 Hz, 1 at 16 kHz
    const double f = 0.80 + 0.15 * x - 0.05 * x * x;
    const double ksv1 = 0.030 - 0.008 * x - 0.002 * x * x;
    return TwoSiteParams(f, ksv1, ksv1 / 10.0);
}

CalibrationTable make_calibration() {
    const Eigen::VectorXd hz = frequency_grid_hz();
    std::vector<CalibrationEntry> entries;
    entries.reserve(static_cast<std::size_t>(hz.size()));
    for (Eigen::Index k = 0; k < hz.size(); ++k) {
        FitResult fit{params_at_hz(hz(k)), 0.0, Eigen::VectorXd(), 0, true, {}};
        entries.push_back({ModulationFrequency::from_hz(hz(k)), std::move(fit)});
    }
    return CalibrationTable(Temperature(temperature_c), std::move(entries));
}

std::vector<double> calibration_concentrations() {
    return {0.0, 5.0, 10.0, 20.0, 30.0, 45.0, 60.0, 75.0, 90.0, 100.0};
}

void write_raw_phase_csv(const std::filesystem::path& path) {
    const Eigen::VectorXd hz = frequency_grid_hz();
    std::string body = "frequency_hz,temperature_c,o2_percent_air,tan_theta\n";
    for (Eigen::Index k = 0; k < hz.size(); ++k) {
        const ModulationFrequency omega = ModulationFrequency::from_hz(hz(k));
        const TwoSiteParams params = params_at_hz(hz(k));
        const double tan_theta0 = omega.angular() * tau0_seconds;
        for (const double c : calibration_concentrations()) {
            const double tan_theta = tan_theta0 * phase_ratio_r(params, Concentration(c));
            body += io::format_double(hz(k)) + ',' + io::format_double(temperature_c) + ',' +
                    io::format_double(c) + ',' + io::format_double(tan_theta) + '\n';
        }
    }
    io::write_text_file(path, body);
}

}  // namespace oxysense::fixture

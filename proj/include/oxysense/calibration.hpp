#pragma once

#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "oxysense/quench.hpp"
#include "oxysense/spline.hpp"
#include "oxysense/units.hpp"

namespace oxysense {

/// One measured quench curve: the phase ratio r over concentration at a fixed
/// modulation frequency and temperature. Ratios are pre-normalized so the
/// zero-oxygen reference point has r = 1; exactly one such point must exist.
class QuenchCurve {
public:
    QuenchCurve(ModulationFrequency omega, Temperature temperature,
                Eigen::ArrayXd concentrations, Eigen::ArrayXd ratios);

    const ModulationFrequency& omega() const { return omega_; }
    const Temperature& temperature() const { return temperature_; }
    const Eigen::ArrayXd& concentrations() const { return concentrations_; }
    const Eigen::ArrayXd& ratios() const { return ratios_; }
    Eigen::Index size() const { return concentrations_.size(); }

private:
    ModulationFrequency omega_;
    Temperature temperature_;
    Eigen::ArrayXd concentrations_;
    Eigen::ArrayXd ratios_;
};

struct FitResult {
    TwoSiteParams params;
    double residual_norm = 0.0;              // sqrt(sum of squared residuals)
    Eigen::VectorXd per_point_residuals;     // model - data, input point order
    int iterations = 0;
    bool converged = false;
    std::vector<double> accepted_residual_norms;  // trace: init + accepted steps
};

struct LmOptions {
    double lambda_init = 1e-3;
    double lambda_up = 10.0;       // on rejected step
    double lambda_down = 0.1;      // on accepted step
    double step_tol = 1e-10;       // relative step length
    double grad_tol = 1e-12;       // gradient infinity norm
    int max_iterations = 200;
};

/// Heuristic starting point: f = 0.8, ksv1 from the single-site slope of
/// 1/r - 1 over the two lowest nonzero concentrations, ksv2 = ksv1 / 10.
TwoSiteParams default_init(const QuenchCurve& curve);

/// Levenberg-Marquardt fit of the two-site phase-ratio model to a quench
/// curve. Runs on the unconstrained reparameterization f = logistic(u),
/// ksv = exp(v) with an analytic Jacobian; the result honours the
/// ksv1 >= ksv2 convention. Exhausting the iteration budget yields
/// converged = false rather than an exception.
FitResult fit_two_site(const QuenchCurve& curve, const TwoSiteParams& init,
                       const LmOptions& options = {});

struct CalibrationEntry {
    ModulationFrequency omega;
    FitResult fit;
};

/// Per-frequency fit results plus the spline curves built over the fitted
/// knots. Entries are kept strictly increasing in frequency.
class CalibrationTable {
public:
    CalibrationTable(Temperature temperature, std::vector<CalibrationEntry> entries);

    const Temperature& temperature() const { return temperature_; }
    const std::vector<CalibrationEntry>& entries() const { return entries_; }
    const ParamCurves& curves() const { return curves_; }

    Eigen::VectorXd frequencies_hz() const;
    bool all_converged() const;

private:
    Temperature temperature_;
    std::vector<CalibrationEntry> entries_;
    ParamCurves curves_;
};

/// Fits every curve independently (from default_init), orders by frequency,
/// and builds the parameter splines over the fitted knots. Non-converged fits
/// are kept and flagged. Requires >= 3 curves with distinct frequencies and a
/// common temperature label.
CalibrationTable build_calibration(const std::vector<QuenchCurve>& curves);

/// Calibration file: JSON with fields version, temperature_c, frequencies_hz,
/// f, ksv1, ksv2, converged.
void write_calibration(const CalibrationTable& table, const std::filesystem::path& path);
CalibrationTable read_calibration(const std::filesystem::path& path);

}  // namespace oxysense

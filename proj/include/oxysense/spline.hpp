#pragma once

#include <Eigen/Dense>

#include "oxysense/quench.hpp"
#include "oxysense/units.hpp"

namespace oxysense {

/// Natural cubic spline through strictly increasing knots. Interpolates every
/// knot exactly, is C2 on [x0, x_{n-1}], and has zero second derivative at
/// both ends. Evaluation outside the knot range is a hard error; the fitted
/// parameter curves are not trustworthy beyond the measured frequency band,
/// so no extrapolation is offered.
class CubicSpline {
public:
    CubicSpline(Eigen::VectorXd xs, Eigen::VectorXd ys);

    double operator()(double x) const;

    double x_min() const { return xs_(0); }
    double x_max() const { return xs_(xs_.size() - 1); }
    Eigen::Index size() const { return xs_.size(); }
    const Eigen::VectorXd& knots_x() const { return xs_; }
    const Eigen::VectorXd& knots_y() const { return ys_; }

private:
    Eigen::VectorXd xs_;
    Eigen::VectorXd ys_;
    Eigen::VectorXd second_;  // second derivatives at knots; 0 at both ends
};

/// The three fitted parameter curves over angular frequency. All share the
/// knot abscissae of the calibration grid.
struct ParamCurves {
    CubicSpline f_curve;
    CubicSpline ksv1_curve;
    CubicSpline ksv2_curve;

    ParamCurves(CubicSpline f, CubicSpline ksv1, CubicSpline ksv2);

    double omega_min() const { return f_curve.x_min(); }
    double omega_max() const { return f_curve.x_max(); }
};

/// Evaluates all three curves at omega and clamps the results into the valid
/// parameter region (f into [0,1], constants to >= 0) before constructing
/// TwoSiteParams.
TwoSiteParams sample_params(const ParamCurves& curves, const ModulationFrequency& omega);

}  // namespace oxysense

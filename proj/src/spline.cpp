#include "oxysense/spline.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace oxysense {

CubicSpline::CubicSpline(Eigen::VectorXd xs, Eigen::VectorXd ys)
    : xs_(std::move(xs)), ys_(std::move(ys)) {
    const Eigen::Index n = xs_.size();
    if (ys_.size() != n) throw std::invalid_argument("CubicSpline: knot arrays differ in length");
    if (n < 3) throw std::invalid_argument("CubicSpline: at least 3 knots required");
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!std::isfinite(xs_(i)) || !std::isfinite(ys_(i)))
            throw std::invalid_argument("CubicSpline: knots must be finite");
        if (i > 0 && !(xs_(i) > xs_(i - 1)))
            throw std::invalid_argument("CubicSpline: abscissae must be strictly increasing");
    }

    // Second derivatives from the tridiagonal system; natural ends are zero.
    // Solved in place with the Thomas algorithm on the n-2 interior rows.
    second_ = Eigen::VectorXd::Zero(n);
    const Eigen::Index m = n - 2;
    Eigen::VectorXd diag(m), upper(m), rhs(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        const double hl = xs_(i + 1) - xs_(i);
        const double hr = xs_(i + 2) - xs_(i + 1);
        diag(i) = (hl + hr) / 3.0;
        upper(i) = hr / 6.0;
        rhs(i) = (ys_(i + 2) - ys_(i + 1)) / hr - (ys_(i + 1) - ys_(i)) / hl;
    }
    for (Eigen::Index i = 1; i < m; ++i) {
        const double lower = (xs_(i + 1) - xs_(i)) / 6.0;
        const double w = lower / diag(i - 1);
        diag(i) -= w * upper(i - 1);
        rhs(i) -= w * rhs(i - 1);
    }
    if (m > 0) {
        second_(m) = rhs(m - 1) / diag(m - 1);
        for (Eigen::Index i = m - 1; i >= 1; --i) {
            second_(i) = (rhs(i - 1) - upper(i - 1) * second_(i + 1)) / diag(i - 1);
        }
    }
}

double CubicSpline::operator()(double x) const {
    const Eigen::Index n = xs_.size();
    if (!(x >= xs_(0)) || !(x <= xs_(n - 1)))
        throw std::domain_error("CubicSpline: evaluation outside the knot range");

    const double* begin = xs_.data();
    const double* pos = std::upper_bound(begin, begin + n, x);
    Eigen::Index i = std::max<Eigen::Index>(0, std::min(n - 2, (pos - begin) - 1));

    const double h = xs_(i + 1) - xs_(i);
    const double a = (xs_(i + 1) - x) / h;
    const double b = (x - xs_(i)) / h;
    return a * ys_(i) + b * ys_(i + 1) +
           ((a * a * a - a) * second_(i) + (b * b * b - b) * second_(i + 1)) * (h * h) / 6.0;
}

ParamCurves::ParamCurves(CubicSpline f, CubicSpline ksv1, CubicSpline ksv2)
    : f_curve(std::move(f)), ksv1_curve(std::move(ksv1)), ksv2_curve(std::move(ksv2)) {
    const auto same_knots = [&](const CubicSpline& s) {
        return s.size() == f_curve.size() &&
               (s.knots_x().array() == f_curve.knots_x().array()).all();
    };
    if (!same_knots(ksv1_curve) || !same_knots(ksv2_curve))
        throw std::invalid_argument("ParamCurves: curves must share their knot abscissae");
}

TwoSiteParams sample_params(const ParamCurves& curves, const ModulationFrequency& omega) {
    const double w = omega.angular();
    const double f = std::clamp(curves.f_curve(w), 0.0, 1.0);
    const double k1 = std::max(0.0, curves.ksv1_curve(w));
    const double k2 = std::max(0.0, curves.ksv2_curve(w));
    return TwoSiteParams::canonical(f, k1, k2);
}

}  // namespace oxysense

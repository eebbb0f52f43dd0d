#pragma once

#include <cmath>
#include <stdexcept>

#include "oxysense/units.hpp"

namespace oxysense {

/// Parameters of the two-site Stern-Volmer model: emission fraction f of the
/// more strongly quenched site and the two quenching constants in (% air)^-1.
/// Convention: ksv1 >= ksv2, which resolves the label-swap degeneracy
/// (f <-> 1-f with the constants swapped yields the same curve).
class TwoSiteParams {
public:
    TwoSiteParams(double f, double ksv1, double ksv2)
        : f_(f), ksv1_(ksv1), ksv2_(ksv2) {
        if (!(f_ >= 0.0 && f_ <= 1.0))
            throw std::domain_error("TwoSiteParams: f must lie in [0, 1]");
        if (!(ksv1_ >= 0.0) || !(ksv2_ >= 0.0))
            throw std::domain_error("TwoSiteParams: quenching constants must be >= 0");
        if (!(ksv1_ >= ksv2_))
            throw std::domain_error("TwoSiteParams: convention requires ksv1 >= ksv2");
        if (!std::isfinite(f_) || !std::isfinite(ksv1_) || !std::isfinite(ksv2_))
            throw std::domain_error("TwoSiteParams: parameters must be finite");
    }

    /// Builds params from unordered site labels, swapping (ksv1, ksv2) and
    /// f <-> 1-f if needed. The swap leaves the model curve unchanged.
    static TwoSiteParams canonical(double f, double ksv1, double ksv2) {
        if (ksv1 >= ksv2) return TwoSiteParams(f, ksv1, ksv2);
        return TwoSiteParams(1.0 - f, ksv2, ksv1);
    }

    double f() const { return f_; }
    double ksv1() const { return ksv1_; }
    double ksv2() const { return ksv2_; }

private:
    double f_;
    double ksv1_;
    double ksv2_;
};

/// Single-site Stern-Volmer ratio I0/I = tau0/tau = 1 + ksv * c.
inline double sv_ratio(double ksv, const Concentration& c) {
    if (!(ksv >= 0.0))
        throw std::domain_error("sv_ratio: quenching constant must be >= 0");
    return 1.0 + ksv * c.percent_air();
}

/// Raw two-site phase-ratio formula r = f/(1+k1*c) + (1-f)/(1+k2*c).
/// Works for scalar c as well as Eigen array expressions.
template <typename T>
inline T two_site_phase_ratio(double f, double ksv1, double ksv2, const T& c) {
    return f / (1.0 + ksv1 * c) + (1.0 - f) / (1.0 + ksv2 * c);
}

/// Phase ratio r = tan(theta)/tan(theta0) predicted by the two-site model.
/// Lies in (0, 1]; equals 1 exactly at zero oxygen.
inline double phase_ratio_r(const TwoSiteParams& p, const Concentration& c) {
    if (c.percent_air() == 0.0) return 1.0;
    return two_site_phase_ratio(p.f(), p.ksv1(), p.ksv2(), c.percent_air());
}

/// Two-site intensity ratio I0/I, the reciprocal of the phase ratio.
inline double two_site_intensity_ratio(const TwoSiteParams& p, const Concentration& c) {
    return 1.0 / phase_ratio_r(p, c);
}

/// Phase shift of a single-exponential decay: theta = arctan(omega * tau).
inline PhaseShift phase_from_lifetime(const ModulationFrequency& omega, double tau_seconds) {
    if (!(tau_seconds > 0.0) || !std::isfinite(tau_seconds))
        throw std::domain_error("phase_from_lifetime: lifetime must be finite and > 0");
    return PhaseShift(std::atan(omega.angular() * tau_seconds));
}

}  // namespace oxysense

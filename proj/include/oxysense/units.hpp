#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace oxysense {

/// Oxygen concentration in % air, where 100 % air is the oxygen content of
/// dry air (20 % vol O2). Non-negative; the pipeline operates on [0, 110].
class Concentration {
public:
    explicit Concentration(double percent_air) : value_(percent_air) {
        if (!(value_ >= 0.0) || !std::isfinite(value_))
            throw std::domain_error("Concentration must be a finite value >= 0 % air");
    }

    double percent_air() const { return value_; }

private:
    double value_;
};

/// Modulation frequency of the excitation light. The canonical value is the
/// angular frequency in rad/s; the cyclic value in Hz is kept alongside
/// (angular = 2*pi*hz) so that files written in Hz round-trip exactly.
class ModulationFrequency {
public:
    static ModulationFrequency from_hz(double hz) {
        return ModulationFrequency(2.0 * std::numbers::pi * hz, hz);
    }
    static ModulationFrequency from_angular(double rad_per_s) {
        return ModulationFrequency(rad_per_s, rad_per_s / (2.0 * std::numbers::pi));
    }

    double angular() const { return angular_; }
    double hz() const { return hz_; }

    friend bool operator<(const ModulationFrequency& a, const ModulationFrequency& b) {
        return a.angular_ < b.angular_;
    }
    friend bool operator==(const ModulationFrequency& a, const ModulationFrequency& b) {
        return a.angular_ == b.angular_;
    }

private:
    ModulationFrequency(double angular, double hz) : angular_(angular), hz_(hz) {
        if (!(angular_ > 0.0) || !std::isfinite(angular_))
            throw std::domain_error("ModulationFrequency must be finite and > 0");
    }

    double angular_;
    double hz_;
};

/// Sample temperature in degrees Celsius. A metadata label: the pipeline
/// operates at a fixed temperature per calibration table.
class Temperature {
public:
    explicit Temperature(double celsius) : value_(celsius) {
        if (!std::isfinite(value_))
            throw std::domain_error("Temperature must be finite");
    }

    double celsius() const { return value_; }

    friend bool operator==(const Temperature& a, const Temperature& b) {
        return a.value_ == b.value_;
    }

private:
    double value_;
};

/// Phase shift of the modulated emission relative to the excitation,
/// in radians. Physical lifetimes at positive frequency give (0, pi/2).
class PhaseShift {
public:
    explicit PhaseShift(double radians) : theta_(radians) {
        if (!(theta_ > 0.0) || !(theta_ < std::numbers::pi / 2.0))
            throw std::domain_error("PhaseShift must lie in (0, pi/2)");
    }

    double radians() const { return theta_; }
    double tangent() const { return std::tan(theta_); }

private:
    double theta_;
};

}  // namespace oxysense

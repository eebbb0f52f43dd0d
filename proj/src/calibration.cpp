#include "oxysense/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "oxysense/io.hpp"

namespace oxysense {

namespace {

double logistic(double u) { return 1.0 / (1.0 + std::exp(-u)); }

double logit(double f) {
    const double clamped = std::clamp(f, 1e-9, 1.0 - 1e-9);
    return std::log(clamped / (1.0 - clamped));
}

/// Residuals e_j = r_model(x, c_j) - r_j on the unconstrained coordinates
/// x = (u, v1, v2) with f = logistic(u), k = exp(v).
Eigen::VectorXd residuals(const Eigen::Vector3d& x, const Eigen::ArrayXd& c,
                          const Eigen::ArrayXd& r) {
    const double f = logistic(x(0));
    const double k1 = std::exp(x(1));
    const double k2 = std::exp(x(2));
    return (two_site_phase_ratio(f, k1, k2, c) - r).matrix();
}

Eigen::MatrixXd jacobian(const Eigen::Vector3d& x, const Eigen::ArrayXd& c) {
    const double f = logistic(x(0));
    const double k1 = std::exp(x(1));
    const double k2 = std::exp(x(2));
    const Eigen::ArrayXd t1 = 1.0 / (1.0 + k1 * c);
    const Eigen::ArrayXd t2 = 1.0 / (1.0 + k2 * c);
    Eigen::MatrixXd jac(c.size(), 3);
    jac.col(0) = ((t1 - t2) * f * (1.0 - f)).matrix();
    jac.col(1) = (-f * c * t1.square() * k1).matrix();
    jac.col(2) = (-(1.0 - f) * c * t2.square() * k2).matrix();
    return jac;
}

}  // namespace

QuenchCurve::QuenchCurve(ModulationFrequency omega, Temperature temperature,
                         Eigen::ArrayXd concentrations, Eigen::ArrayXd ratios)
    : omega_(omega),
      temperature_(temperature),
      concentrations_(std::move(concentrations)),
      ratios_(std::move(ratios)) {
    const Eigen::Index n = concentrations_.size();
    if (ratios_.size() != n)
        throw std::invalid_argument("QuenchCurve: concentration and ratio counts differ");
    if (n < 4) throw std::invalid_argument("QuenchCurve: at least 4 points required");

    Eigen::Index reference_count = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!(concentrations_(i) >= 0.0) || !std::isfinite(concentrations_(i)))
            throw std::invalid_argument("QuenchCurve: concentrations must be finite and >= 0");
        if (!(ratios_(i) > 0.0) || !(ratios_(i) <= 1.0))
            throw std::invalid_argument("QuenchCurve: ratios must lie in (0, 1]");
        for (Eigen::Index j = i + 1; j < n; ++j) {
            if (concentrations_(i) == concentrations_(j))
                throw std::invalid_argument("QuenchCurve: concentrations must be distinct");
        }
        if (concentrations_(i) == 0.0) {
            ++reference_count;
            if (std::abs(ratios_(i) - 1.0) > 1e-9)
                throw std::invalid_argument(
                    "QuenchCurve: the zero-oxygen reference must be normalized to r = 1");
        }
    }
    if (reference_count != 1)
        throw std::invalid_argument("QuenchCurve: exactly one zero-oxygen reference point required");
}

TwoSiteParams default_init(const QuenchCurve& curve) {
    // two lowest nonzero concentrations
    Eigen::Index lo1 = -1, lo2 = -1;
    for (Eigen::Index i = 0; i < curve.size(); ++i) {
        if (curve.concentrations()(i) == 0.0) continue;
        if (lo1 < 0 || curve.concentrations()(i) < curve.concentrations()(lo1)) {
            lo2 = lo1;
            lo1 = i;
        } else if (lo2 < 0 || curve.concentrations()(i) < curve.concentrations()(lo2)) {
            lo2 = i;
        }
    }
    if (lo1 < 0 || lo2 < 0)
        throw std::domain_error("default_init: need at least two nonzero concentrations");

    // through-origin least squares of 1/r - 1 = K * c on the two points
    const double c1 = curve.concentrations()(lo1), c2 = curve.concentrations()(lo2);
    const double y1 = 1.0 / curve.ratios()(lo1) - 1.0;
    const double y2 = 1.0 / curve.ratios()(lo2) - 1.0;
    const double slope = (c1 * y1 + c2 * y2) / (c1 * c1 + c2 * c2);
    if (!(slope > 0.0))
        throw std::domain_error("default_init: curve carries no quenching information");
    return TwoSiteParams(0.8, slope, slope / 10.0);
}

FitResult fit_two_site(const QuenchCurve& curve, const TwoSiteParams& init,
                       const LmOptions& options) {
    const Eigen::ArrayXd& c = curve.concentrations();
    const Eigen::ArrayXd& r = curve.ratios();
    if ((r >= 1.0 - 1e-12).all())
        throw std::domain_error("fit_two_site: degenerate curve, all ratios equal 1");

    Eigen::Vector3d x(logit(init.f()), std::log(std::max(init.ksv1(), 1e-12)),
                      std::log(std::max(init.ksv2(), 1e-12)));
    Eigen::VectorXd e = residuals(x, c, r);
    double sse = e.squaredNorm();

    FitResult result{TwoSiteParams(init), 0.0, e, 0, false, {std::sqrt(sse)}};
    double lambda = options.lambda_init;
    bool converged = false;
    int iter = 0;

    while (iter < options.max_iterations) {
        ++iter;
        const Eigen::MatrixXd jac = jacobian(x, c);
        const Eigen::Vector3d gradient = jac.transpose() * e;
        if (gradient.cwiseAbs().maxCoeff() < options.grad_tol) {
            converged = true;
            break;
        }
        const Eigen::Matrix3d normal = jac.transpose() * jac;
        Eigen::Matrix3d damped = normal;
        for (int d = 0; d < 3; ++d)
            damped(d, d) += lambda * std::max(normal(d, d), 1e-12);
        const Eigen::Vector3d step = damped.ldlt().solve(-gradient);

        if (step.norm() / (x.norm() + 1e-12) < options.step_tol) {
            converged = true;
            break;
        }
        const Eigen::Vector3d candidate = x + step;
        const Eigen::VectorXd e_new = residuals(candidate, c, r);
        const double sse_new = e_new.squaredNorm();
        if (sse_new < sse) {
            x = candidate;
            e = e_new;
            sse = sse_new;
            lambda = std::max(lambda * options.lambda_down, 1e-15);
            result.accepted_residual_norms.push_back(std::sqrt(sse));
        } else {
            lambda *= options.lambda_up;
            if (lambda > 1e15) break;  // damping exhausted, no usable direction left
        }
    }

    result.params = TwoSiteParams::canonical(logistic(x(0)), std::exp(x(1)), std::exp(x(2)));
    result.per_point_residuals = e;
    result.residual_norm = std::sqrt(sse);
    result.iterations = iter;
    result.converged = converged;
    return result;
}

CalibrationTable::CalibrationTable(Temperature temperature, std::vector<CalibrationEntry> entries)
    : temperature_(temperature),
      entries_([&] {
          std::sort(entries.begin(), entries.end(),
                    [](const CalibrationEntry& a, const CalibrationEntry& b) {
                        return a.omega < b.omega;
                    });
          return std::move(entries);
      }()),
      curves_([&]() -> ParamCurves {
          const Eigen::Index n = static_cast<Eigen::Index>(entries_.size());
          if (n < 3)
              throw std::invalid_argument("CalibrationTable: at least 3 frequencies required");
          Eigen::VectorXd xs(n), f(n), k1(n), k2(n);
          for (Eigen::Index i = 0; i < n; ++i) {
              const auto& entry = entries_[static_cast<std::size_t>(i)];
              xs(i) = entry.omega.angular();
              if (i > 0 && !(xs(i) > xs(i - 1)))
                  throw std::invalid_argument("CalibrationTable: frequencies must be distinct");
              f(i) = entry.fit.params.f();
              k1(i) = entry.fit.params.ksv1();
              k2(i) = entry.fit.params.ksv2();
          }
          return ParamCurves(CubicSpline(xs, f), CubicSpline(xs, k1), CubicSpline(xs, k2));
      }()) {}

Eigen::VectorXd CalibrationTable::frequencies_hz() const {
    Eigen::VectorXd hz(static_cast<Eigen::Index>(entries_.size()));
    for (Eigen::Index i = 0; i < hz.size(); ++i)
        hz(i) = entries_[static_cast<std::size_t>(i)].omega.hz();
    return hz;
}

bool CalibrationTable::all_converged() const {
    return std::all_of(entries_.begin(), entries_.end(),
                       [](const CalibrationEntry& e) { return e.fit.converged; });
}

CalibrationTable build_calibration(const std::vector<QuenchCurve>& curves) {
    if (curves.size() < 3)
        throw std::invalid_argument("build_calibration: at least 3 quench curves required");
    for (std::size_t i = 1; i < curves.size(); ++i) {
        if (!(curves[i].temperature() == curves[0].temperature()))
            throw std::invalid_argument("build_calibration: curves carry mixed temperature labels");
    }
    std::vector<CalibrationEntry> entries;
    entries.reserve(curves.size());
    for (const auto& curve : curves) {
        entries.push_back({curve.omega(), fit_two_site(curve, default_init(curve))});
    }
    return CalibrationTable(curves[0].temperature(), std::move(entries));
}

void write_calibration(const CalibrationTable& table, const std::filesystem::path& path) {
    auto hz = nlohmann::ordered_json::array();
    auto f = nlohmann::ordered_json::array();
    auto k1 = nlohmann::ordered_json::array();
    auto k2 = nlohmann::ordered_json::array();
    auto conv = nlohmann::ordered_json::array();
    for (const auto& entry : table.entries()) {
        hz.push_back(entry.omega.hz());
        f.push_back(entry.fit.params.f());
        k1.push_back(entry.fit.params.ksv1());
        k2.push_back(entry.fit.params.ksv2());
        conv.push_back(entry.fit.converged);
    }
    nlohmann::ordered_json doc;
    doc["version"] = 1;
    doc["temperature_c"] = table.temperature().celsius();
    doc["frequencies_hz"] = std::move(hz);
    doc["f"] = std::move(f);
    doc["ksv1"] = std::move(k1);
    doc["ksv2"] = std::move(k2);
    doc["converged"] = std::move(conv);
    io::write_text_file(path, doc.dump() + "\n");
}

CalibrationTable read_calibration(const std::filesystem::path& path) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(io::read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw IoError(path.string() + ": " + e.what());
    }
    try {
        if (!doc.contains("version") || doc["version"].get<int>() != 1)
            throw IoError(path.string() + ": unsupported calibration file version");
        const Temperature temperature(doc.at("temperature_c").get<double>());
        const auto hz = doc.at("frequencies_hz").get<std::vector<double>>();
        const auto f = doc.at("f").get<std::vector<double>>();
        const auto k1 = doc.at("ksv1").get<std::vector<double>>();
        const auto k2 = doc.at("ksv2").get<std::vector<double>>();
        const auto conv = doc.at("converged").get<std::vector<bool>>();
        if (f.size() != hz.size() || k1.size() != hz.size() || k2.size() != hz.size() ||
            conv.size() != hz.size())
            throw IoError(path.string() + ": calibration arrays differ in length");

        std::vector<CalibrationEntry> entries;
        entries.reserve(hz.size());
        for (std::size_t i = 0; i < hz.size(); ++i) {
            FitResult fit{TwoSiteParams(f[i], k1[i], k2[i]), 0.0, Eigen::VectorXd(), 0, conv[i], {}};
            entries.push_back({ModulationFrequency::from_hz(hz[i]), std::move(fit)});
        }
        return CalibrationTable(temperature, std::move(entries));
    } catch (const nlohmann::json::exception& e) {
        throw IoError(path.string() + ": " + e.what());
    } catch (const std::domain_error& e) {
        throw IoError(path.string() + ": " + e.what());
    } catch (const std::invalid_argument& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

}  // namespace oxysense

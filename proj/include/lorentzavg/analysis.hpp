#pragma once

#include "distribution.hpp"
#include "dynamics.hpp"
#include "errors.hpp"
#include "fields.hpp"
#include "geometry.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace lorentzavg {

struct BoundConstants {
    double C = 4.0, C2 = 4.0, B2 = 4.0, K = 4.0, K2 = 4.0, D2 = 4.0;
};

// 2 (C|F| + C2^2 (1 + alpha)) alpha^2 E^-2 t^2
inline double position_bound(const BoundConstants& k, double fnorm, double alpha, double energy, double t)
{
    return 2.0 * (k.C * fnorm + k.C2 * k.C2 * (1.0 + alpha)) * alpha * alpha * t * t / (energy * energy);
}

// (K|F| + K2^2 (1 + D2 alpha)) alpha^2 E^-1 t
inline double velocity_bound(const BoundConstants& k, double fnorm, double alpha, double energy, double t)
{
    return (k.K * fnorm + k.K2 * k.K2 * (1.0 + k.D2 * alpha)) * alpha * alpha * t / energy;
}

struct CompareOptions {
    CoupledTransport::Moments moments = CoupledTransport::Moments::transported;
    BoundConstants constants;
    double theta_threshold = 0.1;     // |theta^2 - theta_bar^2| above this is flagged
    double adiabatic_threshold = 0.01; // |d log E / dt| above this is flagged
    unsigned threads = 1;
};

struct ComparisonReport {
    std::vector<double> times;
    std::vector<double> position_separation;
    std::vector<double> velocity_separation;
    std::vector<double> position_bound;
    std::vector<double> velocity_bound;
    std::vector<double> theta_gap;     // theta^2 - theta_bar^2
    std::vector<double> dlog_energy;   // d log E / dt of the transported ensemble
    std::vector<double> averaged_norm; // eta(y~, y~) along the averaged curve
    std::vector<double> energy_along;
    double alpha = 0.0;
    double energy = 0.0;
    double field_norm = 0.0;
    bool theta_flag = false;
    bool adiabatic_flag = false;
    bool within_bound = true;
    std::vector<std::string> warnings;

    double max_position_separation() const
    {
        double m = 0.0;
        for (double v : position_separation) m = std::max(m, v);
        return m;
    }
    double max_velocity_separation() const
    {
        double m = 0.0;
        for (double v : velocity_separation) m = std::max(m, v);
        return m;
    }
};

namespace detail {

inline double spatial_sq(const Vec4& v) { return v.tail<3>().squaredNorm(); }

inline std::vector<double> log_derivative(const std::vector<double>& t, const std::vector<double>& e)
{
    std::vector<double> d(t.size(), 0.0);
    if (t.size() < 2) return d;
    for (std::size_t k = 0; k < t.size(); ++k) {
        const std::size_t a = k == 0 ? 0 : k - 1, b = k + 1 < t.size() ? k + 1 : k;
        d[k] = (std::log(e[b]) - std::log(e[a])) / (t[b] - t[a]);
    }
    return d;
}

} // namespace detail

// Lorentz and averaged curves from the same initial data, compared at equal
// lab times. The ensemble is carried by the Lorentz flow and supplies the
// moments (or a frozen copy of its initial moments).
inline ComparisonReport compare_trajectories(const FaradayField& field, const Ensemble& ens, const TrajectoryState& init,
                                             const std::vector<double>& times, const IntegratorConfig& cfg = {},
                                             const CompareOptions& opt = {},
                                             const Metric& metric = Metric::minkowski(), double charge = 1.0)
{
    if (ens.empty()) throw DomainError("compare_trajectories: empty ensemble");
    const ObserverMetric bar = eta_bar(metric, ens.observer);
    ComparisonReport rep;
    rep.alpha = diameter_alpha(ens, bar);
    rep.energy = energy(ens, metric);

    double nearest = std::numeric_limits<double>::infinity();
    for (const auto& s : ens.samples) nearest = std::min(nearest, bar.norm(s.y - init.y));
    if (nearest > rep.alpha + 1e-12)
        rep.warnings.push_back("initial velocity lies off the ensemble support");

    CoupledTransport run(field, metric, charge);
    run.set_threads(opt.threads);
    run.set_renormalize(cfg.renormalize);
    run.set_carriers(ens);
    if (opt.moments == CoupledTransport::Moments::frozen) run.set_frozen_moments(moments(ens));
    else run.use_transported_moments();
    run.add_test(init.x, init.y);
    run.add_averaged(init.x, init.y);

    double fnorm = field_norm(field, init.x, bar, metric);
    std::vector<double> energies;
    const bool need_zero = times.empty() || times.front() > 0.0;
    std::vector<double> grid = times;
    if (need_zero) grid.insert(grid.begin(), 0.0);
    const double dt = lab_step(ens, cfg.step);
    run.run(grid, dt, [&](const CoupledTransport::Snapshot& snap) {
        const auto& L = snap.tests[0];
        const auto& A = snap.averaged[0];
        fnorm = std::max(fnorm, field_norm(field, L.x, bar, metric));
        rep.times.push_back(snap.t);
        rep.position_separation.push_back(bar.norm(A.x - L.x));
        rep.velocity_separation.push_back(bar.norm(A.y - L.y));
        const Vec4 mean = snap.moments.vol > 0.0 ? snap.moments.mean : moments(ens).mean;
        rep.theta_gap.push_back(detail::spatial_sq(L.y) - 2.0 * detail::spatial_sq(mean) + detail::spatial_sq(A.y));
        rep.averaged_norm.push_back(metric.square(A.y));
        double e = std::numeric_limits<double>::infinity();
        for (const auto& c : snap.carriers) e = std::min(e, metric.dot(c.y, ens.observer.U));
        energies.push_back(std::isfinite(e) ? e : rep.energy);
    });
    rep.field_norm = fnorm;
    rep.energy_along = energies;
    rep.dlog_energy = detail::log_derivative(rep.times, energies);
    for (std::size_t k = 0; k < rep.times.size(); ++k) {
        const double t = rep.times[k];
        rep.position_bound.push_back(position_bound(opt.constants, fnorm, rep.alpha, rep.energy, t));
        rep.velocity_bound.push_back(velocity_bound(opt.constants, fnorm, rep.alpha, rep.energy, t));
        if (rep.position_separation[k] > rep.position_bound[k] && rep.position_separation[k] > 1e-9) {
            if (rep.within_bound)
                rep.warnings.push_back("position separation exceeds the bound at alpha=" + std::to_string(rep.alpha) +
                                       " E=" + std::to_string(rep.energy) + " t=" + std::to_string(t));
            rep.within_bound = false;
        }
        if (std::abs(rep.theta_gap[k]) > opt.theta_threshold) rep.theta_flag = true;
        if (std::abs(rep.dlog_energy[k]) > opt.adiabatic_threshold) rep.adiabatic_flag = true;
    }
    if (need_zero) {
        // keep t = 0 only if it was requested
        auto drop = [](auto& v) { v.erase(v.begin()); };
        drop(rep.times);
        drop(rep.position_separation);
        drop(rep.velocity_separation);
        drop(rep.position_bound);
        drop(rep.velocity_bound);
        drop(rep.theta_gap);
        drop(rep.dlog_energy);
        drop(rep.averaged_norm);
        drop(rep.energy_along);
    }
    return rep;
}

struct ScalingFit {
    std::string parameter;
    std::vector<std::pair<double, double>> samples;
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
};

// Least-squares line through (log param, log response).
inline ScalingFit fit_scaling(std::vector<std::pair<double, double>> sweep, std::string parameter = "x")
{
    if (sweep.size() < 4) throw DomainError("fit_scaling: need at least 4 sweep points");
    for (const auto& [p, r] : sweep)
        if (!(p > 0.0) || !(r > 0.0)) throw DomainError("fit_scaling: sweep values must be positive");
    const double n = static_cast<double>(sweep.size());
    double sx = 0, sy = 0;
    for (const auto& [p, r] : sweep) {
        sx += std::log(p);
        sy += std::log(r);
    }
    const double mx = sx / n, my = sy / n;
    double sxx = 0, sxy = 0, syy = 0;
    for (const auto& [p, r] : sweep) {
        const double dx = std::log(p) - mx, dy = std::log(r) - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if (!(sxx > 0.0)) throw DomainError("fit_scaling: parameter values must not all coincide");
    ScalingFit fit;
    fit.parameter = std::move(parameter);
    fit.samples = std::move(sweep);
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double ss_res = 0.0;
    for (const auto& [p, r] : fit.samples) {
        const double e = std::log(r) - (fit.intercept + fit.slope * std::log(p));
        ss_res += e * e;
    }
    fit.r2 = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
    return fit;
}

struct ValidityConstants {
    double C1 = 4.0, K = 4.0, A = 4.0;
};

struct ValidityReport {
    double t_max_position = 0.0;
    double t_max_velocity = 0.0;
    double L_max = 0.0;
    bool weak = false;
    ValidityConstants constants;
};

// L_geom is the admissible separation (pipe scale) used for the position
// horizon; L_bar is the beam extent the field-derived L_max is compared with.
inline ValidityReport validity_horizon(double E0, double alpha, double fnorm, double L_geom, double L_bar,
                                       const ValidityConstants& k = {})
{
    if (!(E0 > 0.0) || !(alpha > 0.0) || !(fnorm >= 0.0) || !(L_geom > 0.0) || !(L_bar > 0.0))
        throw DomainError("validity_horizon: inputs must be positive");
    if (!(k.C1 > 0.0) || !(k.K > 0.0) || !(k.A > 0.0)) throw DomainError("validity_horizon: constants must be positive");
    ValidityReport r;
    r.constants = k;
    const double inf = std::numeric_limits<double>::infinity();
    r.t_max_position = fnorm > 0.0 ? std::sqrt(L_geom / k.C1) * (E0 / alpha) / std::sqrt(fnorm) : inf;
    r.t_max_velocity = fnorm > 0.0 ? k.K * (E0 / alpha) / fnorm : inf;
    r.L_max = fnorm > 0.0 ? k.A / fnorm : inf;
    r.weak = r.L_max <= L_bar;
    return r;
}

struct DivergenceReport {
    std::vector<double> times;
    std::vector<double> divergence;
    std::vector<double> bound;
    double alpha = 0.0, energy = 0.0, field_norm = 0.0;
};

// (C |F| C2^2 (1 + B2 alpha)) alpha^2 E^-2 t^2 + (K |F| K2^2 (1 + D2 alpha)) alpha^2 E^-1 t
inline double divergence_bound(const BoundConstants& k, double fnorm, double alpha, double energy, double t)
{
    const double a2 = alpha * alpha;
    return k.C * fnorm * k.C2 * k.C2 * (1.0 + k.B2 * alpha) * a2 * t * t / (energy * energy) +
           k.K * fnorm * k.K2 * k.K2 * (1.0 + k.D2 * alpha) * a2 * t / energy;
}

// Pushes every sample under both flows and reports, per lab time, the largest
// phase-space displacement |x_L - x_A| + |y_L - y_A|.
inline DivergenceReport distribution_divergence(const FaradayField& field, const Ensemble& ens,
                                                const std::vector<double>& times, const IntegratorConfig& cfg = {},
                                                const CompareOptions& opt = {},
                                                const Metric& metric = Metric::minkowski(), double charge = 1.0)
{
    if (ens.empty()) throw DomainError("distribution_divergence: empty ensemble");
    const ObserverMetric bar = eta_bar(metric, ens.observer);
    DivergenceReport rep;
    rep.alpha = diameter_alpha(ens, bar);
    rep.energy = energy(ens, metric);
    rep.field_norm = field_norm(field, ens.samples.front().x, bar, metric);
    CoupledTransport run(field, metric, charge);
    run.set_threads(opt.threads);
    run.set_renormalize(cfg.renormalize);
    run.set_carriers(ens);
    if (opt.moments == CoupledTransport::Moments::frozen) run.set_frozen_moments(moments(ens));
    else run.use_transported_moments();
    for (const auto& s : ens.samples) run.add_averaged(s.x, s.y);
    run.run(times, lab_step(ens, cfg.step), [&](const CoupledTransport::Snapshot& snap) {
        double worst = 0.0;
        for (std::size_t a = 0; a < snap.carriers.size(); ++a) {
            const auto& L = snap.carriers[a];
            const auto& A = snap.averaged[a];
            rep.field_norm = std::max(rep.field_norm, field_norm(field, L.x, bar, metric));
            worst = std::max(worst, bar.norm(L.x - A.x) + bar.norm(L.y - A.y));
        }
        rep.times.push_back(snap.t);
        rep.divergence.push_back(worst);
    });
    for (double t : rep.times)
        rep.bound.push_back(divergence_bound(opt.constants, rep.field_norm, rep.alpha, rep.energy, t));
    return rep;
}

} // namespace lorentzavg

#pragma once

#include "connections.hpp"
#include "distribution.hpp"
#include "errors.hpp"
#include "fields.hpp"
#include "parallel.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace lorentzavg {

enum class Param { proper_time, lab_time };

inline const char* param_name(Param p) { return p == Param::proper_time ? "tau" : "t"; }

struct TrajectoryState {
    double s = 0.0;
    Vec4 x = Vec4::Zero();
    Vec4 y = Vec4(1.0, 0.0, 0.0, 0.0);
};

struct TrajectoryRecord {
    Param param = Param::proper_time;
    std::vector<TrajectoryState> states;
    std::vector<Vec4> accel; // dy/ds at each stored state
    std::size_t steps = 0;
    double max_drift = 0.0; // largest |eta(y,y) - 1| seen

    const TrajectoryState& back() const { return states.back(); }
};

struct IntegratorConfig {
    enum class Method { rk4, rk45 } method = Method::rk4;
    double step = 1e-3;
    double tolerance = 1e-10;
    bool renormalize = true;
    std::size_t record_every = 1;
};

// Second-order system in the form x' = y, y' = accel(x, y).
using AccelFn = std::function<Vec4(const Vec4& x, const Vec4& y)>;

namespace detail {

struct Phase {
    Vec4 x, y;
};

inline Phase rk4_step(const AccelFn& acc, const Phase& p, double h, Vec4* a0_out = nullptr)
{
    const Vec4 a1 = acc(p.x, p.y);
    if (a0_out) *a0_out = a1;
    const Vec4 x2 = p.x + 0.5 * h * p.y, y2 = p.y + 0.5 * h * a1;
    const Vec4 a2 = acc(x2, y2);
    const Vec4 x3 = p.x + 0.5 * h * y2, y3 = p.y + 0.5 * h * a2;
    const Vec4 a3 = acc(x3, y3);
    const Vec4 x4 = p.x + h * y3, y4 = p.y + h * a3;
    const Vec4 a4 = acc(x4, y4);
    return {p.x + h / 6.0 * (p.y + 2.0 * y2 + 2.0 * y3 + y4), p.y + h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)};
}

// Dormand-Prince 5(4); returns the fifth-order solution and an error estimate.
inline std::pair<Phase, double> dp45_step(const AccelFn& acc, const Phase& p, double h)
{
    static constexpr double c[7][6] = {
        {},
        {1.0 / 5},
        {3.0 / 40, 9.0 / 40},
        {44.0 / 45, -56.0 / 15, 32.0 / 9},
        {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729},
        {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656},
        {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84},
    };
    static constexpr double b4[7] = {5179.0 / 57600, 0.0, 7571.0 / 16695, 393.0 / 640, -92097.0 / 339200,
                                     187.0 / 2100, 1.0 / 40};
    std::array<Vec4, 7> kx, ky;
    for (int s = 0; s < 7; ++s) {
        Vec4 x = p.x, y = p.y;
        for (int r = 0; r < s; ++r) {
            x += h * c[s][r] * kx[r];
            y += h * c[s][r] * ky[r];
        }
        kx[s] = y;
        ky[s] = acc(x, y);
    }
    Phase hi{p.x, p.y}, lo{p.x, p.y};
    for (int s = 0; s < 6; ++s) {
        hi.x += h * c[6][s] * kx[s];
        hi.y += h * c[6][s] * ky[s];
    }
    for (int s = 0; s < 7; ++s) {
        lo.x += h * b4[s] * kx[s];
        lo.y += h * b4[s] * ky[s];
    }
    double err = 0.0;
    for (int i = 0; i < 4; ++i) {
        err = std::max(err, std::abs(hi.x[i] - lo.x[i]) / (1.0 + std::abs(hi.x[i])));
        err = std::max(err, std::abs(hi.y[i] - lo.y[i]) / (1.0 + std::abs(hi.y[i])));
    }
    return {hi, err};
}

inline void check_finite(const Phase& p, const char* module)
{
    if (!p.x.allFinite() || !p.y.allFinite()) throw NumericError(module, "non-finite state");
}

} // namespace detail

// Integrates x' = y, y' = acc over [s0, s1] (either direction).
inline TrajectoryRecord integrate(const AccelFn& acc, const TrajectoryState& init, double s1,
                                  const IntegratorConfig& cfg, bool renormalize, const Metric& metric,
                                  const char* module = "dynamics")
{
    if (!(cfg.step > 0.0) && cfg.method == IntegratorConfig::Method::rk4)
        throw DomainError("integrator step must be positive");
    TrajectoryRecord rec;
    const double dir = s1 >= init.s ? 1.0 : -1.0;
    detail::Phase p{init.x, init.y};
    double s = init.s;
    rec.states.push_back(init);
    rec.accel.push_back(acc(p.x, p.y));
    rec.max_drift = std::abs(metric.square(p.y) - 1.0);

    auto finish_step = [&](const detail::Phase& next, double s_next) {
        p = next;
        if (renormalize) {
            const double yy = metric.square(p.y);
            if (!(yy > 0.0)) throw NumericError(module, "velocity left the timelike cone");
            p.y /= std::sqrt(yy);
        }
        detail::check_finite(p, module);
        s = s_next;
        ++rec.steps;
        rec.max_drift = std::max(rec.max_drift, std::abs(metric.square(p.y) - 1.0));
        const bool last = dir * (s1 - s) <= 0.0;
        if (last || rec.steps % std::max<std::size_t>(1, cfg.record_every) == 0) {
            rec.states.push_back({s, p.x, p.y});
            rec.accel.push_back(acc(p.x, p.y));
        }
    };

    if (cfg.method == IntegratorConfig::Method::rk4) {
        const double span = std::abs(s1 - init.s);
        const auto n = static_cast<std::size_t>(std::ceil(span / cfg.step - 1e-9));
        for (std::size_t k = 1; k <= n; ++k) {
            const double s_next = k == n ? s1 : init.s + dir * static_cast<double>(k) * cfg.step;
            finish_step(detail::rk4_step(acc, p, s_next - s), s_next);
        }
    } else {
        if (!(cfg.tolerance > 0.0)) throw DomainError("integrator tolerance must be positive");
        double h = cfg.step > 0.0 ? cfg.step : 1e-3;
        while (dir * (s1 - s) > 0.0) {
            h = std::min(h, std::abs(s1 - s));
            if (h < 1e-14 * (1.0 + std::abs(s))) throw NumericError(module, "step size underflow");
            auto [next, err] = detail::dp45_step(acc, p, dir * h);
            if (err <= cfg.tolerance) {
                const double s_next = std::abs(s1 - (s + dir * h)) < 1e-14 ? s1 : s + dir * h;
                finish_step(next, s_next);
            }
            const double fac = err > 0.0 ? 0.9 * std::pow(cfg.tolerance / err, 0.2) : 5.0;
            h *= std::clamp(fac, 0.2, 5.0);
        }
    }
    rec.param = Param::proper_time;
    return rec;
}

inline AccelFn lorentz_accel(const FaradayField& field, const Metric& metric, double charge)
{
    return [field, metric, charge](const Vec4& x, const Vec4& y) -> Vec4 {
        return charge * (field.mixed(x, metric) * y);
    };
}

inline TrajectoryRecord push_lorentz(const FaradayField& field, const TrajectoryState& init, double s1,
                                     const IntegratorConfig& cfg = {}, const Metric& metric = Metric::minkowski(),
                                     double charge = 1.0)
{
    if (std::abs(metric.square(init.y) - 1.0) > 1e-10)
        throw DomainError("push_lorentz: initial velocity must lie on the unit hyperboloid");
    return integrate(lorentz_accel(field, metric, charge), init, s1, cfg, cfg.renormalize, metric, "push_lorentz");
}

inline TrajectoryRecord push_connection(const ConnectionCoeffs& coeffs, const TrajectoryState& init, double s1,
                                        const IntegratorConfig& cfg = {},
                                        const Metric& metric = Metric::minkowski())
{
    AccelFn acc = [coeffs](const Vec4& x, const Vec4& y) -> Vec4 { return -coeffs.spray(x, y); };
    return integrate(acc, init, s1, cfg, cfg.renormalize, metric, "push_connection");
}

// Affine pushes never project back to the hyperboloid.
inline TrajectoryRecord push_connection(const AffineCoeffs& coeffs, const TrajectoryState& init, double s1,
                                        const IntegratorConfig& cfg = {},
                                        const Metric& metric = Metric::minkowski())
{
    AccelFn acc = [coeffs](const Vec4& x, const Vec4& y) -> Vec4 { return -coeffs.spray(x, y); };
    return integrate(acc, init, s1, cfg, false, metric, "push_connection");
}

// ------------------------------------------------------------ lab-time slicing

namespace detail {

inline double hermite(double p0, double m0, double p1, double m1, double h, double u)
{
    const double u2 = u * u, u3 = u2 * u;
    return (2 * u3 - 3 * u2 + 1) * p0 + (u3 - 2 * u2 + u) * h * m0 + (-2 * u3 + 3 * u2) * p1 + (u3 - u2) * h * m1;
}

inline double hermite_slope(double p0, double m0, double p1, double m1, double h, double u)
{
    const double u2 = u * u;
    return ((6 * u2 - 6 * u) * p0 + (3 * u2 - 4 * u + 1) * h * m0 + (-6 * u2 + 6 * u) * p1 +
            (3 * u2 - 2 * u) * h * m1) /
           h;
}

struct Knot {
    double s;
    Vec4 x, y, a;
};

// Locates x^0 = t inside [k0, k1] on the cubic Hermite interpolant and returns
// the interpolated state.
inline TrajectoryState slice_between(const Knot& k0, const Knot& k1, double t)
{
    const double h = k1.s - k0.s;
    double lo = 0.0, hi = 1.0;
    double u = (t - k0.x[0]) / (k1.x[0] - k0.x[0]);
    u = std::clamp(std::isfinite(u) ? u : 0.5, 0.0, 1.0);
    for (int it = 0; it < 60; ++it) {
        const double f = hermite(k0.x[0], k0.y[0], k1.x[0], k1.y[0], h, u) - t;
        if (std::abs(f) < 1e-15 * (1.0 + std::abs(t))) break;
        (f > 0 ? hi : lo) = u;
        const double df = hermite_slope(k0.x[0], k0.y[0], k1.x[0], k1.y[0], h, u) * h;
        double un = df != 0.0 ? u - f / df : 0.5 * (lo + hi);
        if (!(un > lo && un < hi)) un = 0.5 * (lo + hi);
        u = un;
    }
    TrajectoryState st;
    st.s = k0.s + u * h;
    for (int i = 0; i < 4; ++i) {
        st.x[i] = hermite(k0.x[i], k0.y[i], k1.x[i], k1.y[i], h, u);
        st.y[i] = hermite(k0.y[i], k0.a[i], k1.y[i], k1.a[i], h, u);
    }
    st.x[0] = t;
    return st;
}

} // namespace detail

// Resamples a proper-time record at the given lab times (t = x^0).
inline TrajectoryRecord to_lab_time(const TrajectoryRecord& rec, const std::vector<double>& times)
{
    if (rec.param != Param::proper_time) throw DomainError("to_lab_time: record is not proper-time parameterized");
    if (rec.accel.size() != rec.states.size()) throw DomainError("to_lab_time: record lacks derivative data");
    for (std::size_t k = 1; k < rec.states.size(); ++k)
        if (!(rec.states[k].x[0] > rec.states[k - 1].x[0]))
            throw NumericError("to_lab_time", "lab time is not monotone along the record");
    TrajectoryRecord out;
    out.param = Param::lab_time;
    out.steps = rec.steps;
    out.max_drift = rec.max_drift;
    std::size_t k = 0;
    for (double t : times) {
        if (t < rec.states.front().x[0] - 1e-12 || t > rec.states.back().x[0] + 1e-12)
            throw DomainError("to_lab_time: requested time outside the record");
        while (k + 2 < rec.states.size() && rec.states[k + 1].x[0] < t) ++k;
        const auto& a = rec.states[k];
        const auto& b = rec.states[std::min(k + 1, rec.states.size() - 1)];
        detail::Knot k0{a.s, a.x, a.y, rec.accel[k]}, k1{b.s, b.x, b.y, rec.accel[std::min(k + 1, rec.states.size() - 1)]};
        TrajectoryState st = (b.s == a.s) ? a : detail::slice_between(k0, k1, t);
        st.s = t;
        out.states.push_back(st);
        out.accel.push_back(Vec4::Zero());
    }
    return out;
}

inline TrajectoryRecord to_lab_time(const TrajectoryRecord& rec, double dt)
{
    std::vector<double> times;
    const double t0 = rec.states.front().x[0], t1 = rec.states.back().x[0];
    const auto n = static_cast<std::size_t>(std::floor((t1 - t0) / dt + 1e-9));
    for (std::size_t k = 0; k <= n; ++k) times.push_back(t0 + static_cast<double>(k) * dt);
    return to_lab_time(rec, times);
}

// Pushes one sample in proper time until its lab time passes the last slice,
// interpolating the state at every requested lab time on the way.
inline std::vector<TrajectoryState> slice_sample(const AccelFn& acc, const TrajectoryState& init,
                                                 const std::vector<double>& times, const IntegratorConfig& cfg,
                                                 bool renormalize, const Metric& metric, std::size_t index,
                                                 const char* module)
{
    std::vector<TrajectoryState> out;
    out.reserve(times.size());
    detail::Phase p{init.x, init.y};
    double s = init.s;
    Vec4 a = acc(p.x, p.y);
    std::size_t next = 0;
    while (next < times.size() && times[next] <= p.x[0] + 1e-14) {
        out.push_back({s, p.x, p.y});
        out.back().x[0] = times[next++];
    }
    std::size_t guard = 0;
    while (next < times.size()) {
        detail::Phase q = detail::rk4_step(acc, p, cfg.step);
        if (renormalize) {
            const double yy = metric.square(q.y);
            if (!(yy > 0.0)) throw NumericError(module, "velocity left the timelike cone", index);
            q.y /= std::sqrt(yy);
        }
        if (!q.x.allFinite() || !q.y.allFinite()) throw NumericError(module, "non-finite state", index);
        if (!(q.x[0] > p.x[0])) throw NumericError(module, "lab time stopped increasing", index);
        const Vec4 b = acc(q.x, q.y);
        const detail::Knot k0{s, p.x, p.y, a}, k1{s + cfg.step, q.x, q.y, b};
        while (next < times.size() && times[next] <= q.x[0]) out.push_back(detail::slice_between(k0, k1, times[next++]));
        p = q;
        a = b;
        s += cfg.step;
        if (++guard > 100000000) throw NumericError(module, "too many steps", index);
    }
    return out;
}

using EnsembleSlices = std::vector<Ensemble>;

namespace detail {

inline EnsembleSlices gather_slices(const Ensemble& ens, const std::vector<double>& times,
                                    const std::vector<std::vector<TrajectoryState>>& per_sample)
{
    EnsembleSlices slices(times.size());
    for (std::size_t k = 0; k < times.size(); ++k) {
        slices[k].observer = ens.observer;
        slices[k].generator = ens.generator;
        slices[k].params = ens.params;
        slices[k].params["t"] = times[k];
        slices[k].samples.reserve(ens.size());
        for (std::size_t a = 0; a < ens.size(); ++a)
            slices[k].samples.push_back({per_sample[a][k].x, per_sample[a][k].y, ens.samples[a].w});
    }
    return slices;
}

} // namespace detail

inline EnsembleSlices transport_ensemble(const FaradayField& field, const Ensemble& ens,
                                         const std::vector<double>& times, const IntegratorConfig& cfg = {},
                                         const Metric& metric = Metric::minkowski(), double charge = 1.0,
                                         unsigned threads = 1)
{
    for (std::size_t a = 0; a < ens.size(); ++a)
        if (std::abs(metric.square(ens.samples[a].y) - 1.0) > 1e-10)
            throw NumericError("transport_ensemble", "sample off the unit hyperboloid", a);
    const AccelFn acc = lorentz_accel(field, metric, charge);
    std::vector<std::vector<TrajectoryState>> per(ens.size());
    parallel_for(ens.size(), threads, [&](std::size_t a) {
        const auto& smp = ens.samples[a];
        per[a] = slice_sample(acc, {0.0, smp.x, smp.y}, times, cfg, cfg.renormalize, metric, a, "transport_ensemble");
    });
    return detail::gather_slices(ens, times, per);
}

// ------------------------------------------------------------ coupled lab-time transport

// Integrates, on one lab-time grid, a set of Lorentz carriers (which supply the
// moments when they are transported), extra Lorentz test particles, and
// particles following the averaged connection. Every RK stage sees moments
// built from the carriers at that same stage.
class CoupledTransport {
public:
    enum class Moments { frozen, transported };

    struct Particle {
        Vec4 x, y;
    };

    struct Snapshot {
        double t = 0.0;
        std::vector<Particle> carriers, tests, averaged;
        MomentSet moments;
    };

    CoupledTransport(FaradayField field, Metric metric = Metric::minkowski(), double charge = 1.0)
        : field_(std::move(field)), metric_(std::move(metric)), charge_(charge)
    {
    }

    void set_carriers(const Ensemble& ens)
    {
        carriers_.clear();
        weights_.clear();
        for (const auto& s : ens.samples) {
            carriers_.push_back({s.x, s.y});
            weights_.push_back(s.w);
        }
    }
    void set_frozen_moments(const MomentSet& m)
    {
        frozen_ = m;
        mode_ = Moments::frozen;
    }
    void use_transported_moments() { mode_ = Moments::transported; }
    void add_test(const Vec4& x, const Vec4& y) { tests_.push_back({x, y}); }
    void add_averaged(const Vec4& x, const Vec4& y) { averaged_.push_back({x, y}); }
    void set_renormalize(bool on) { renormalize_ = on; }
    void set_threads(unsigned n) { threads_ = n; }

    MomentSet current_moments(const std::vector<Particle>& carriers) const
    {
        if (mode_ == Moments::frozen) {
            if (!frozen_) throw DomainError("CoupledTransport: frozen mode without moments");
            return *frozen_;
        }
        return moments_of(
            carriers.size(), [&](std::size_t a) -> const Vec4& { return carriers[a].y; },
            [&](std::size_t a) { return weights_[a]; });
    }

    // Runs from t = 0 to every requested time (ascending), with lab steps no
    // longer than dt, and calls sink at each requested time.
    void run(const std::vector<double>& times, double dt, const std::function<void(const Snapshot&)>& sink)
    {
        if (!(dt > 0.0)) throw DomainError("CoupledTransport: dt must be positive");
        State st{carriers_, tests_, averaged_};
        double t = 0.0;
        for (double target : times) {
            if (target < t - 1e-12) throw DomainError("CoupledTransport: times must ascend from 0");
            const auto n = static_cast<std::size_t>(std::ceil((target - t) / dt - 1e-9));
            const double t_start = t;
            for (std::size_t k = 1; k <= n; ++k) {
                const double t_next = k == n ? target : t_start + static_cast<double>(k) * dt;
                st = rk4(st, t_next - t);
                t = t_next;
            }
            Snapshot snap{target, st.carriers, st.tests, st.averaged,
                          (mode_ == Moments::transported && st.carriers.empty()) ? MomentSet{}
                                                                                  : current_moments(st.carriers)};
            sink(snap);
        }
    }

private:
    struct State {
        std::vector<Particle> carriers, tests, averaged;
    };

    Particle lorentz_rate(const Particle& p) const
    {
        const Vec4 a = charge_ * (field_.mixed(p.x, metric_) * p.y);
        return {p.y / p.y[0], a / p.y[0]};
    }

    Particle averaged_rate(const Particle& p, const MomentSet& m) const
    {
        const Mat4 F = effective_force(field_, p.x, metric_, charge_);
        const Vec4 a = -averaged_spray(F, metric_, m, p.y);
        if (!(p.y[0] > 0.0)) throw NumericError("averaged transport", "velocity is no longer future pointing");
        return {p.y / p.y[0], a / p.y[0]};
    }

    State rates(const State& s) const
    {
        State r;
        r.carriers.resize(s.carriers.size());
        parallel_for(s.carriers.size(), threads_, [&](std::size_t a) { r.carriers[a] = lorentz_rate(s.carriers[a]); });
        r.tests.resize(s.tests.size());
        for (std::size_t a = 0; a < s.tests.size(); ++a) r.tests[a] = lorentz_rate(s.tests[a]);
        r.averaged.resize(s.averaged.size());
        if (!s.averaged.empty()) {
            const MomentSet m = current_moments(s.carriers);
            parallel_for(s.averaged.size(), threads_,
                         [&](std::size_t a) { r.averaged[a] = averaged_rate(s.averaged[a], m); });
        }
        return r;
    }

    static State axpy(const State& s, double h, const State& k)
    {
        State o = s;
        auto upd = [h](std::vector<Particle>& v, const std::vector<Particle>& d) {
            for (std::size_t a = 0; a < v.size(); ++a) {
                v[a].x += h * d[a].x;
                v[a].y += h * d[a].y;
            }
        };
        upd(o.carriers, k.carriers);
        upd(o.tests, k.tests);
        upd(o.averaged, k.averaged);
        return o;
    }

    State rk4(const State& s, double h) const
    {
        const State k1 = rates(s);
        const State k2 = rates(axpy(s, 0.5 * h, k1));
        const State k3 = rates(axpy(s, 0.5 * h, k2));
        const State k4 = rates(axpy(s, h, k3));
        State o = s;
        auto comb = [h](std::vector<Particle>& v, const std::vector<Particle>& a, const std::vector<Particle>& b,
                        const std::vector<Particle>& c, const std::vector<Particle>& d) {
            for (std::size_t i = 0; i < v.size(); ++i) {
                v[i].x += h / 6.0 * (a[i].x + 2.0 * b[i].x + 2.0 * c[i].x + d[i].x);
                v[i].y += h / 6.0 * (a[i].y + 2.0 * b[i].y + 2.0 * c[i].y + d[i].y);
            }
        };
        comb(o.carriers, k1.carriers, k2.carriers, k3.carriers, k4.carriers);
        comb(o.tests, k1.tests, k2.tests, k3.tests, k4.tests);
        comb(o.averaged, k1.averaged, k2.averaged, k3.averaged, k4.averaged);
        if (renormalize_) {
            auto proj = [this](std::vector<Particle>& v, const char* what) {
                for (std::size_t a = 0; a < v.size(); ++a) {
                    const double yy = metric_.square(v[a].y);
                    if (!(yy > 0.0)) throw NumericError(what, "velocity left the timelike cone", a);
                    v[a].y /= std::sqrt(yy);
                }
            };
            proj(o.carriers, "transport_ensemble");
            proj(o.tests, "push_lorentz");
        }
        for (std::size_t a = 0; a < o.carriers.size(); ++a)
            if (!o.carriers[a].x.allFinite() || !o.carriers[a].y.allFinite())
                throw NumericError("transport_ensemble", "non-finite state", a);
        for (std::size_t a = 0; a < o.averaged.size(); ++a)
            if (!o.averaged[a].x.allFinite() || !o.averaged[a].y.allFinite())
                throw NumericError("transport_ensemble_averaged", "non-finite state", a);
        return o;
    }

    FaradayField field_;
    Metric metric_;
    double charge_;
    Moments mode_ = Moments::transported;
    std::optional<MomentSet> frozen_;
    std::vector<Particle> carriers_, tests_, averaged_;
    std::vector<double> weights_;
    bool renormalize_ = true;
    unsigned threads_ = 1;
};

// Lab step for the coupled transport. Off the hyperboloid the averaged flow
// has modes turning at a rate of order |F| y^0, so the lab step is the proper
// time step itself rather than a multiple of it.
inline double lab_step(const Ensemble&, double tau_step) { return tau_step; }

inline EnsembleSlices transport_ensemble_averaged(const FaradayField& field, const Ensemble& ens,
                                                  const std::vector<double>& times,
                                                  CoupledTransport::Moments mode, const IntegratorConfig& cfg = {},
                                                  const Metric& metric = Metric::minkowski(), double charge = 1.0,
                                                  unsigned threads = 1)
{
    CoupledTransport run(field, metric, charge);
    run.set_threads(threads);
    run.set_renormalize(cfg.renormalize);
    if (mode == CoupledTransport::Moments::transported) {
        run.set_carriers(ens);
        run.use_transported_moments();
    } else {
        run.set_frozen_moments(moments(ens));
    }
    for (const auto& s : ens.samples) run.add_averaged(s.x, s.y);
    EnsembleSlices out;
    run.run(times, lab_step(ens, cfg.step), [&](const CoupledTransport::Snapshot& snap) {
        Ensemble e;
        e.observer = ens.observer;
        e.generator = ens.generator;
        e.params = ens.params;
        e.params["t"] = snap.t;
        for (std::size_t a = 0; a < snap.averaged.size(); ++a)
            e.samples.push_back({snap.averaged[a].x, snap.averaged[a].y, ens.samples[a].w});
        out.push_back(std::move(e));
    });
    return out;
}

// chi(f) = y^i d_i f - G^i d f / d y^i, with the Lorentz spray G, by central
// differences in all eight phase-space coordinates.
inline double liouville_residual(const std::function<double(const Vec4&, const Vec4&)>& f,
                                 const FaradayField& field, const Vec4& x, const Vec4& y, double h,
                                 const Metric& metric = Metric::minkowski(), double charge = 1.0)
{
    if (!(h > 0.0)) throw DomainError("liouville_residual: step must be positive");
    const LorentzConnection lc(field, metric, charge);
    const Vec4 G = lc.spray(x, y);
    double r = 0.0;
    for (int i = 0; i < 4; ++i) {
        const Vec4 e = h * unit(i);
        const double dfx = (f(x + e, y) - f(x - e, y)) / (2.0 * h);
        const double dfy = (f(x, y + e) - f(x, y - e)) / (2.0 * h);
        r += y[i] * dfx - G[i] * dfy;
    }
    return r;
}

} // namespace lorentzavg

#pragma once

#include "connections.hpp"
#include "dynamics.hpp"
#include "errors.hpp"
#include "fields.hpp"
#include "geometry.hpp"
#include "tensor.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace lorentzavg {

// ------------------------------------------------------------ Jacobi fields

struct JacobiState {
    double tau = 0.0;
    Vec4 xi = Vec4::Zero();
    Vec4 xip = Vec4::Zero();
};

struct JacobiRecord {
    std::vector<JacobiState> states;
    const JacobiState& back() const { return states.back(); }
};

// Cubic Hermite interpolation of a recorded trajectory, using y as the
// derivative of x and the recorded acceleration as the derivative of y.
class ReferenceCurve {
public:
    explicit ReferenceCurve(TrajectoryRecord rec) : rec_(std::move(rec))
    {
        if (rec_.states.size() < 2 || rec_.accel.size() != rec_.states.size())
            throw DomainError("reference curve needs at least two recorded states with accelerations");
    }

    double front() const { return rec_.states.front().s; }
    double back() const { return rec_.states.back().s; }

    std::pair<Vec4, Vec4> at(double s) const
    {
        const auto& st = rec_.states;
        const double lo = std::min(front(), back()), hi = std::max(front(), back());
        const double tol = 1e-9 * (1.0 + std::abs(hi));
        if (s < lo - tol || s > hi + tol) throw DomainError("reference curve does not cover the requested parameter");
        const bool ascending = back() >= front();
        auto before = [&](double a, double b) { return ascending ? a < b : a > b; };
        std::size_t a = 0, b = st.size() - 1;
        while (b - a > 1) {
            const std::size_t m = (a + b) / 2;
            if (before(s, st[m].s)) b = m;
            else a = m;
        }
        const std::size_t k = a;
        const double h = st[k + 1].s - st[k].s;
        const double u = (s - st[k].s) / h;
        const double h00 = (1 + 2 * u) * (1 - u) * (1 - u), h10 = u * (1 - u) * (1 - u);
        const double h01 = u * u * (3 - 2 * u), h11 = u * u * (u - 1);
        const Vec4 x = h00 * st[k].x + h10 * h * st[k].y + h01 * st[k + 1].x + h11 * h * st[k + 1].y;
        const Vec4 y = h00 * st[k].y + h10 * h * rec_.accel[k] + h01 * st[k + 1].y + h11 * h * rec_.accel[k + 1];
        return {x, y};
    }

    const TrajectoryRecord& record() const { return rec_; }

private:
    TrajectoryRecord rec_;
};

// Right-hand side of the linearized auto-parallel equation along X:
//   xi'' = -[2 Gamma(X)(xi', X') + xi^l d_l Gamma(X)(X', X')].
inline Vec4 jacobi_rhs(const AffineCoeffs& coeffs, const Vec4& X, const Vec4& Xdot, const Vec4& xi, const Vec4& xip,
                       double h = 1e-5)
{
    const Coeffs table = coeffs.at(X);
    const Vec4 mixed = table.contract(xip, Xdot) + table.contract(Xdot, xip);
    Vec4 drift = Vec4::Zero();
    if (xi.squaredNorm() > 0.0) {
        const double scale = xi.norm();
        const Vec4 dir = xi / scale;
        drift = scale * (coeffs.spray(X + h * dir, Xdot) - coeffs.spray(X - h * dir, Xdot)) / (2.0 * h);
    }
    return -(mixed + drift);
}

inline Vec4 jacobi_rhs(const AffineCoeffs& coeffs, const ReferenceCurve& ref, const JacobiState& s, double h = 1e-5)
{
    const auto [X, Xdot] = ref.at(s.tau);
    return jacobi_rhs(coeffs, X, Xdot, s.xi, s.xip, h);
}

inline JacobiRecord integrate_jacobi(const AffineCoeffs& coeffs, const ReferenceCurve& ref, const JacobiState& init,
                                     double tau1, double step, double fd_step = 1e-5)
{
    if (!(step > 0.0)) throw DomainError("integrate_jacobi: step must be positive");
    const double span = tau1 - init.tau;
    const auto n = static_cast<std::size_t>(std::ceil(std::abs(span) / step - 1e-9));
    JacobiRecord rec;
    rec.states.push_back(init);
    JacobiState s = init;
    auto deriv = [&](double tau, const Vec4& xi, const Vec4& xip) {
        return std::pair<Vec4, Vec4>{xip, jacobi_rhs(coeffs, ref, {tau, xi, xip}, fd_step)};
    };
    for (std::size_t k = 1; k <= n; ++k) {
        const double t_next = k == n ? tau1 : init.tau + span * static_cast<double>(k) / static_cast<double>(n);
        const double dt = t_next - s.tau;
        const auto [a1, b1] = deriv(s.tau, s.xi, s.xip);
        const auto [a2, b2] = deriv(s.tau + dt / 2, s.xi + dt / 2 * a1, s.xip + dt / 2 * b1);
        const auto [a3, b3] = deriv(s.tau + dt / 2, s.xi + dt / 2 * a2, s.xip + dt / 2 * b2);
        const auto [a4, b4] = deriv(t_next, s.xi + dt * a3, s.xip + dt * b3);
        s.xi += dt / 6 * (a1 + 2 * a2 + 2 * a3 + a4);
        s.xip += dt / 6 * (b1 + 2 * b2 + 2 * b3 + b4);
        s.tau = t_next;
        if (!s.xi.allFinite() || !s.xip.allFinite())
            throw NumericError("beamline", "Jacobi field became non-finite at tau=" + std::to_string(s.tau));
        rec.states.push_back(s);
    }
    return rec;
}

// ------------------------------------------------------------ Hill systems

// u'' + c(tau) u' + K(tau) u = p(tau)
struct HillSystem {
    std::string component;
    std::function<double(double)> K = [](double) { return 0.0; };
    std::function<double(double)> damping = [](double) { return 0.0; };
    std::optional<double> K_const = 0.0;
    std::optional<double> damping_const = 0.0;

    static HillSystem constant(std::string component, double K, double c = 0.0)
    {
        HillSystem h;
        h.component = std::move(component);
        h.K = [K](double) { return K; };
        h.damping = [c](double) { return c; };
        h.K_const = K;
        h.damping_const = c;
        return h;
    }
};

struct BeamlineOptions {
    // +1 keeps the dipole focusing term exactly as printed (xi'' - xi/rho^2 = 0);
    // -1 uses the conventional weak-focusing sign.
    double dipole_sign = 1.0;
};

using OpticsParams = std::map<std::string, double>;

namespace detail {

inline double optics_param(const OpticsParams& p, const std::string& key, const std::string& preset)
{
    auto it = p.find(key);
    if (it == p.end()) throw DomainError("preset '" + preset + "' needs parameter '" + key + "'");
    return it->second;
}

} // namespace detail

inline std::vector<std::string> optics_preset_names()
{
    return {"normal-dipole", "skew-dipole", "normal-quad+dipole", "quad-45+dipole", "longitudinal-E", "rf-cavity"};
}

inline std::vector<HillSystem> preset_system(const std::string& name, const OpticsParams& p,
                                             const BeamlineOptions& opt = {})
{
    using detail::optics_param;
    if (name == "normal-dipole" || name == "skew-dipole") {
        const double rho = optics_param(p, "rho", name);
        if (rho == 0.0) throw DomainError("rho must be nonzero");
        return {HillSystem::constant("xi1", -opt.dipole_sign / (rho * rho)), HillSystem::constant("xi3", 0.0)};
    }
    if (name == "normal-quad+dipole") {
        const double rho = optics_param(p, "rho", name);
        const double b1 = optics_param(p, "b1", name);
        return {HillSystem::constant("xi1", 1.0 / (rho * rho) - b1), HillSystem::constant("xi3", b1)};
    }
    if (name == "quad-45+dipole") {
        const double rho = optics_param(p, "rho", name);
        const double b0 = optics_param(p, "b0", name);
        const double b1 = optics_param(p, "b1", name);
        return {HillSystem::constant("xi1", b1 + 1.0 / (rho * rho)), HillSystem::constant("xi3", -b0)};
    }
    if (name == "longitudinal-E") {
        return {HillSystem::constant("xi2", 0.0, optics_param(p, "E2", name))};
    }
    if (name == "rf-cavity") {
        const double gamma = optics_param(p, "gamma", name);
        const double E0 = optics_param(p, "E2_0", name);
        return {HillSystem::constant("xi2", -2.0 * gamma * E0)};
    }
    throw DomainError("unknown optics preset '" + name + "'");
}

// Principal solutions on a grid: C(0) = 1, C'(0) = 0, S(0) = 0, S'(0) = 1.
struct PrincipalSolutions {
    HillSystem system;
    std::vector<double> tau, C, Cp, S, Sp;

    double wronskian(std::size_t n) const { return C[n] * Sp[n] - Cp[n] * S[n]; }
    double max_wronskian_drift() const
    {
        double worst = 0.0;
        for (std::size_t n = 0; n < tau.size(); ++n) {
            double expected = 1.0;
            if (system.damping_const) expected = std::exp(-*system.damping_const * (tau[n] - tau.front()));
            worst = std::max(worst, std::abs(wronskian(n) - expected) / std::max(1.0, std::abs(expected)));
        }
        return worst;
    }
};

inline std::vector<double> uniform_grid(double tau0, double tau1, double step)
{
    if (!(step > 0.0) || !(tau1 > tau0)) throw DomainError("uniform_grid: need tau1 > tau0 and a positive step");
    const auto n = static_cast<std::size_t>(std::ceil((tau1 - tau0) / step - 1e-9));
    std::vector<double> g(n + 1);
    for (std::size_t k = 0; k <= n; ++k) g[k] = tau0 + (tau1 - tau0) * static_cast<double>(k) / static_cast<double>(n);
    return g;
}

inline PrincipalSolutions principal_solutions(const HillSystem& sys, const std::vector<double>& grid,
                                              double max_step = 1e-2)
{
    if (grid.size() < 2) throw DomainError("principal_solutions: grid needs two nodes");
    PrincipalSolutions ps;
    ps.system = sys;
    ps.tau = grid;
    using State = Eigen::Vector4d; // C, C', S, S'
    auto rhs = [&](double t, const State& u) {
        const double K = sys.K(t), c = sys.damping(t);
        return State(u[1], -K * u[0] - c * u[1], u[3], -K * u[2] - c * u[3]);
    };
    State u(1.0, 0.0, 0.0, 1.0);
    auto push = [&] {
        ps.C.push_back(u[0]);
        ps.Cp.push_back(u[1]);
        ps.S.push_back(u[2]);
        ps.Sp.push_back(u[3]);
    };
    push();
    for (std::size_t n = 1; n < grid.size(); ++n) {
        const double span = grid[n] - grid[n - 1];
        if (!(span > 0.0)) throw DomainError("principal_solutions: grid must ascend strictly");
        const auto sub = static_cast<std::size_t>(std::ceil(span / max_step - 1e-9));
        const double h = span / static_cast<double>(sub);
        double t = grid[n - 1];
        for (std::size_t k = 0; k < sub; ++k) {
            const State k1 = rhs(t, u);
            const State k2 = rhs(t + h / 2, u + h / 2 * k1);
            const State k3 = rhs(t + h / 2, u + h / 2 * k2);
            const State k4 = rhs(t + h, u + h * k3);
            u += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
            t += h;
        }
        if (!u.allFinite()) throw NumericError("beamline", "principal solutions diverged");
        push();
    }
    return ps;
}

// Green function G(tau, s) = [S(tau) C(s) - C(tau) S(s)] / W(s), interpolated
// between grid nodes with cubic Hermite pieces.
class GreenFunction {
public:
    explicit GreenFunction(PrincipalSolutions ps) : ps_(std::move(ps)) {}

    double operator()(double tau, double s) const
    {
        const auto [Ct, St] = eval(tau);
        const auto [Cs, Ss] = eval(s);
        return (St * Cs - Ct * Ss) / wronskian(s);
    }

    std::pair<double, double> eval(double t) const
    {
        const auto& g = ps_.tau;
        if (t < g.front() - 1e-12 || t > g.back() + 1e-12) throw DomainError("Green function evaluated off its grid");
        std::size_t k = static_cast<std::size_t>(std::upper_bound(g.begin(), g.end(), t) - g.begin());
        k = std::clamp<std::size_t>(k, 1, g.size() - 1) - 1;
        const double h = g[k + 1] - g[k];
        const double u = (t - g[k]) / h;
        const double h00 = (1 + 2 * u) * (1 - u) * (1 - u), h10 = u * (1 - u) * (1 - u);
        const double h01 = u * u * (3 - 2 * u), h11 = u * u * (u - 1);
        auto herm = [&](const std::vector<double>& f, const std::vector<double>& fp) {
            return h00 * f[k] + h10 * h * fp[k] + h01 * f[k + 1] + h11 * h * fp[k + 1];
        };
        return {herm(ps_.C, ps_.Cp), herm(ps_.S, ps_.Sp)};
    }

    double wronskian(double s) const
    {
        if (ps_.system.damping_const)
            return std::exp(-*ps_.system.damping_const * (s - ps_.tau.front()));
        const auto& g = ps_.tau;
        std::size_t k = static_cast<std::size_t>(std::lower_bound(g.begin(), g.end(), s) - g.begin());
        k = std::min(k, g.size() - 1);
        return ps_.wronskian(k);
    }

    const PrincipalSolutions& solutions() const { return ps_; }

private:
    PrincipalSolutions ps_;
};

inline GreenFunction green(const PrincipalSolutions& ps) { return GreenFunction(ps); }

namespace detail {

// Integral over [a, b] of the quadratic through three nodes, by two-point
// Gauss which is exact for it.
inline double quadratic_piece(const std::array<double, 3>& x, const std::array<double, 3>& f, double a, double b)
{
    auto lagrange = [&](double t) {
        double sum = 0.0;
        for (int i = 0; i < 3; ++i) {
            double l = 1.0;
            for (int j = 0; j < 3; ++j)
                if (j != i) l *= (t - x[j]) / (x[i] - x[j]);
            sum += f[i] * l;
        }
        return sum;
    };
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    const double r = half / std::sqrt(3.0);
    return half * (lagrange(mid - r) + lagrange(mid + r));
}

} // namespace detail

// Running integral of f over the grid: Simpson pairs, with a quadratic over
// the trailing three nodes closing odd node counts.
inline std::vector<double> cumulative_integral(const std::vector<double>& x, const std::vector<double>& f)
{
    if (x.size() != f.size()) throw DomainError("cumulative_integral: size mismatch");
    std::vector<double> I(x.size(), 0.0);
    if (x.size() < 2) return I;
    if (x.size() == 2) {
        I[1] = 0.5 * (x[1] - x[0]) * (f[0] + f[1]);
        return I;
    }
    I[1] = detail::quadratic_piece({x[0], x[1], x[2]}, {f[0], f[1], f[2]}, x[0], x[1]);
    for (std::size_t n = 2; n < x.size(); ++n) {
        if (n % 2 == 0)
            I[n] = I[n - 2] + detail::quadratic_piece({x[n - 2], x[n - 1], x[n]}, {f[n - 2], f[n - 1], f[n]},
                                                      x[n - 2], x[n]);
        else
            I[n] = I[n - 1] + detail::quadratic_piece({x[n - 2], x[n - 1], x[n]}, {f[n - 2], f[n - 1], f[n]},
                                                      x[n - 1], x[n]);
    }
    return I;
}

struct ParticularSolution {
    std::vector<double> tau, P, Pp;
};

// P(tau) = int_0^tau G(tau, s) p(s) ds on the grid of the principal solutions.
inline ParticularSolution particular_solution(const std::vector<double>& p, const PrincipalSolutions& ps)
{
    if (p.size() != ps.tau.size()) throw DomainError("particular_solution: source and grid differ in size");
    const std::size_t n = p.size();
    std::vector<double> pc(n), psv(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double W = ps.wronskian(k);
        pc[k] = p[k] * ps.C[k] / W;
        psv[k] = p[k] * ps.S[k] / W;
    }
    const auto Ic = cumulative_integral(ps.tau, pc);
    const auto Is = cumulative_integral(ps.tau, psv);
    ParticularSolution out{ps.tau, std::vector<double>(n), std::vector<double>(n)};
    for (std::size_t k = 0; k < n; ++k) {
        out.P[k] = ps.S[k] * Ic[k] - ps.C[k] * Is[k];
        out.Pp[k] = ps.Sp[k] * Ic[k] - ps.Cp[k] * Is[k];
    }
    return out;
}

inline ParticularSolution particular_solution(const std::function<double(double)>& p, const PrincipalSolutions& ps)
{
    std::vector<double> v(ps.tau.size());
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = p(ps.tau[k]);
    return particular_solution(v, ps);
}

// Homogeneous solution u0 C + u0' S plus the particular part.
inline ParticularSolution solve_hill(const PrincipalSolutions& ps, double u0, double up0,
                                     const std::vector<double>& p = {})
{
    ParticularSolution out;
    if (p.empty()) out = {ps.tau, std::vector<double>(ps.tau.size(), 0.0), std::vector<double>(ps.tau.size(), 0.0)};
    else out = particular_solution(p, ps);
    for (std::size_t k = 0; k < ps.tau.size(); ++k) {
        out.P[k] += u0 * ps.C[k] + up0 * ps.S[k];
        out.Pp[k] += u0 * ps.Cp[k] + up0 * ps.Sp[k];
    }
    return out;
}

// Closed form of xi2 in a uniform longitudinal field: xi2(0) = 0.
inline double longitudinal_closed_form(double tau, double xip0, double E2)
{
    if (E2 == 0.0) return xip0 * tau;
    return -(xip0 / E2) * (std::exp(-E2 * tau) - 1.0);
}

// ------------------------------------------------------------ off-set

// Samples of the averaged reference and the beam along a common parameter.
struct OffsetInputs {
    std::vector<double> tau;
    std::vector<Vec4> X, Xdot, epsilon, mean_xi;
    std::vector<MomentSet> moments;
};

enum class OffsetMode { full, frozen };

struct OffsetReport {
    std::vector<double> tau;
    std::vector<double> off1, off3;
    std::vector<Vec4> source; // p^i at each node
};

namespace detail {

inline Vec4 offset_source(const FaradayField& field, const Metric& g, double charge, const Vec4& X, const Vec4& Xdot,
                          const Vec4& eps, const Vec4& mean_xi, const MomentSet& m, OffsetMode mode)
{
    const Mat4 F = effective_force(field, X, g, charge);
    const Vec4 vl = g.lower(Xdot);
    const double mv = m.mean.dot(vl);
    const Vec4 c2v = m.central2 * vl;
    Vec4 c3vv;
    for (int k = 0; k < 4; ++k) c3vv[k] = vl.dot(m.central3.c[k] * vl);
    const Vec4 spread = m.mean * (g.square(Xdot) - mv * mv - vl.dot(c2v)) - 2.0 * mv * c2v - c3vv;

    Vec4 p = (F * eps) * g.dot(eps, Xdot) + (F * Xdot) * g.square(eps) + F * spread;
    if (mode == OffsetMode::full && mean_xi.squaredNorm() > 0.0) {
        const auto dF = field.mixed_gradient(X, g);
        Mat4 along = Mat4::Zero();
        for (int l = 0; l < 4; ++l) along += mean_xi[l] * dF[l];
        p += -charge * (along * spread);
    }
    return p;
}

} // namespace detail

inline OffsetReport averaged_offset(const FaradayField& field, const OffsetInputs& in, OffsetMode mode = OffsetMode::full,
                                    const std::optional<std::array<HillSystem, 2>>& systems = std::nullopt,
                                    const Metric& metric = Metric::minkowski(), double charge = 1.0)
{
    const std::size_t n = in.tau.size();
    if (n < 2 || in.X.size() != n || in.Xdot.size() != n || in.epsilon.size() != n || in.mean_xi.size() != n ||
        in.moments.size() != n)
        throw DomainError("averaged_offset: inconsistent input lengths");
    OffsetReport out;
    out.tau = in.tau;
    std::vector<double> p1(n), p3(n);
    for (std::size_t k = 0; k < n; ++k) {
        const Vec4 p = detail::offset_source(field, metric, charge, in.X[k], in.Xdot[k], in.epsilon[k],
                                             in.mean_xi[k], in.moments[k], mode);
        if (!p.allFinite()) throw NumericError("beamline", "off-set source non-finite", k);
        out.source.push_back(p);
        p1[k] = p[1];
        p3[k] = p[3];
    }
    const auto sys = systems.value_or(std::array<HillSystem, 2>{HillSystem::constant("xi1", 0.0),
                                                                HillSystem::constant("xi3", 0.0)});
    out.off1 = particular_solution(p1, principal_solutions(sys[0], in.tau)).P;
    out.off3 = particular_solution(p3, principal_solutions(sys[1], in.tau)).P;
    return out;
}

// Runs the beam together with one averaged particle started at the centroid
// with the normalized mean velocity, and samples everything at the lab times.
inline OffsetInputs offset_inputs(const FaradayField& field, const Ensemble& ens, const std::vector<double>& lab_times,
                                  double dt, const Metric& metric = Metric::minkowski(), double charge = 1.0,
                                  unsigned threads = 1)
{
    if (ens.empty()) throw DomainError("offset_inputs: empty ensemble");
    const MomentSet m0 = moments(ens);
    const double mm = metric.square(m0.mean);
    if (!(mm > 0.0)) throw DomainError("offset_inputs: mean velocity is not timelike");
    Vec4 centroid = Vec4::Zero();
    double wsum = 0.0;
    for (const auto& s : ens.samples) {
        centroid += s.w * s.x;
        wsum += s.w;
    }
    centroid /= wsum;

    CoupledTransport run(field, metric, charge);
    run.set_carriers(ens);
    run.use_transported_moments();
    run.add_averaged(centroid, m0.mean / std::sqrt(mm));
    run.set_threads(threads);

    OffsetInputs in;
    std::vector<double> inv_gamma;
    std::vector<double> times = lab_times;
    if (times.empty() || times.front() != 0.0) times.insert(times.begin(), 0.0);
    run.run(times, dt, [&](const CoupledTransport::Snapshot& snap) {
        const auto& ref = snap.averaged.front();
        Vec4 mean_x = Vec4::Zero();
        double w = 0.0;
        for (std::size_t a = 0; a < snap.carriers.size(); ++a) {
            mean_x += ens.samples[a].w * snap.carriers[a].x;
            w += ens.samples[a].w;
        }
        mean_x /= w;
        in.X.push_back(ref.x);
        in.Xdot.push_back(ref.y);
        in.moments.push_back(snap.moments);
        in.epsilon.push_back(snap.moments.mean - ref.y);
        in.mean_xi.push_back(mean_x - ref.x);
        in.tau.push_back(snap.t);
        inv_gamma.push_back(1.0 / ref.y[0]);
    });
    // Convert lab time to the proper time of the reference.
    in.tau = cumulative_integral(in.tau, inv_gamma);
    return in;
}

} // namespace lorentzavg

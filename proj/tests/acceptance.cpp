#include <lorentzavg/analysis.hpp>
#include <lorentzavg/beamline.hpp>
#include <lorentzavg/connections.hpp>
#include <lorentzavg/distribution.hpp>
#include <lorentzavg/dynamics.hpp>
#include <lorentzavg/fields.hpp>
#include <lorentzavg/fluid.hpp>
#include <lorentzavg/io.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

using namespace lorentzavg;
namespace fs = std::filesystem;

namespace {

struct Check {
    std::string id;
    bool pass = false;
    std::string detail;
};

std::string num(double v)
{
    std::ostringstream os;
    os.precision(3);
    os << v;
    return os.str();
}

FaradayField dipole() { return make_preset("normal-dipole", {{"b0", 1.0}}); }

TrajectoryState start_on_support(double energy, double alpha)
{
    TrajectoryState s;
    s.y = beam_shape(energy, alpha).support_point({1.0, 1.0, 1.0}, 0.8);
    return s;
}

struct Paths {
    std::optional<std::string> cli;
    std::optional<std::string> configs;
};

// ------------------------------------------------------------ 1

std::vector<Check> gyromotion(const Paths&)
{
    const double b = 1.0, gamma = 5.0, u = std::sqrt(gamma * gamma - 1.0);
    const double period = 2.0 * std::numbers::pi / b;
    IntegratorConfig cfg;
    cfg.step = 1e-3;
    const auto rec = push_lorentz(make_preset("constant-B", {{"B3", b}}), {0.0, Vec4::Zero(), lift({u, 0.0, 0.0})},
                                  period, cfg);
    // Centre and radius from an algebraic least-squares circle fit of the orbit.
    Eigen::Matrix3d normal = Eigen::Matrix3d::Zero();
    Eigen::Vector3d rhs = Eigen::Vector3d::Zero();
    for (const auto& st : rec.states) {
        const Eigen::Vector3d row(st.x[1], st.x[2], 1.0);
        normal += row * row.transpose();
        rhs += row * (st.x[1] * st.x[1] + st.x[2] * st.x[2]);
    }
    const Eigen::Vector3d sol = normal.ldlt().solve(rhs);
    const Eigen::Vector2d centre(0.5 * sol[0], 0.5 * sol[1]);
    const double radius = std::sqrt(sol[2] + centre.squaredNorm());
    double spread = 0.0;
    for (const auto& st : rec.states)
        spread = std::max(spread, std::abs((st.x.segment<2>(1) - centre).norm() - radius));

    // Period: proper time at which the velocity direction has turned by 2 pi.
    double turned = 0.0, tau_turn = std::nan("");
    for (std::size_t k = 1; k < rec.states.size(); ++k) {
        const auto& a = rec.states[k - 1].y;
        const auto& c = rec.states[k].y;
        const double dphi = std::atan2(a[1] * c[2] - a[2] * c[1], a[1] * c[1] + a[2] * c[2]);
        if (std::abs(turned + dphi) >= 2.0 * std::numbers::pi) {
            const double frac = (2.0 * std::numbers::pi - std::abs(turned)) / std::abs(dphi);
            tau_turn = rec.states[k - 1].s + frac * (rec.states[k].s - rec.states[k - 1].s);
            break;
        }
        turned += dphi;
    }
    if (std::isnan(tau_turn)) tau_turn = rec.back().s + (2.0 * std::numbers::pi - std::abs(turned)) / b;

    const double r_exact = u / b;
    const double r_err = std::max(std::abs(radius - r_exact), spread) / r_exact;
    const double t_err = std::abs(tau_turn - period) / period;
    const bool ok = r_err < 1e-6 && t_err < 1e-6;
    return {{"1", ok,
             "radius " + num(radius) + " vs " + num(r_exact) + " (rel " + num(r_err) + "), period " + num(tau_turn) +
                 " vs " + num(period) + " (rel " + num(t_err) + "), lab period " + num(gamma * tau_turn) +
                 "; tolerance 1e-6"}};
}

// ------------------------------------------------------------ 2

std::vector<Check> coincidence(const Paths&)
{
    const Vec4 y0 = lift({0.0, 3.0, 0.0});
    std::vector<double> times;
    for (int k = 0; k <= 100; ++k) times.push_back(static_cast<double>(k));
    IntegratorConfig cfg;
    cfg.step = 1e-3;
    const auto rep = compare_trajectories(dipole(), delta_ensemble(y0), {0.0, Vec4::Zero(), y0}, times, cfg);
    const double worst = std::max(rep.max_position_separation(), rep.max_velocity_separation());
    return {{"2", worst < 1e-9,
             "delta ensemble, E=" + num(y0[0]) + ", t in [0,100]: max separation " + num(worst) + " (< 1e-9)"}};
}

// ------------------------------------------------------------ 3, 4

constexpr std::size_t kBenchmarkSamples = 20000;

struct SweepResult {
    std::vector<std::pair<double, double>> position, velocity;
};

SweepResult alpha_sweep()
{
    SweepResult r;
    IntegratorConfig cfg;
    for (double alpha : {0.005, 0.01, 0.02, 0.04}) {
        const auto rep = compare_trajectories(dipole(), momentum_ball(10.0, alpha, kBenchmarkSamples, 1),
                                              start_on_support(10.0, alpha), {0.1}, cfg);
        r.position.emplace_back(alpha, rep.position_separation.back());
        r.velocity.emplace_back(alpha, rep.velocity_separation.back());
    }
    return r;
}

SweepResult energy_sweep()
{
    static std::optional<SweepResult> cached;
    if (cached) return *cached;
    SweepResult r;
    for (double E : {5.0, 10.0, 20.0, 40.0}) {
        const auto rep = compare_trajectories(dipole(), momentum_ball(E, 0.02, kBenchmarkSamples, 1),
                                              start_on_support(E, 0.02), {0.01});
        r.position.emplace_back(E, rep.position_separation.back());
        r.velocity.emplace_back(E, rep.velocity_separation.back());
    }
    return *(cached = r);
}

SweepResult time_sweep()
{
    static std::optional<SweepResult> cached;
    if (cached) return *cached;
    const std::vector<double> times{0.0125, 0.025, 0.05, 0.1};
    const auto rep =
        compare_trajectories(dipole(), momentum_ball(10.0, 0.02, kBenchmarkSamples, 1), start_on_support(10.0, 0.02),
                             times);
    SweepResult r;
    for (std::size_t k = 0; k < times.size(); ++k) {
        r.position.emplace_back(times[k], rep.position_separation[k]);
        r.velocity.emplace_back(times[k], rep.velocity_separation[k]);
    }
    // Early window: t <= 0.1 * second horizon.
    const auto v = validity_horizon(10.0, 0.02, rep.field_norm, 1.0, 1.0);
    if (times.back() > 0.1 * v.t_max_velocity) throw DomainError("time sweep leaves the early window");
    return *(cached = r);
}

Check slope_check(const std::string& id, const std::string& what, const std::vector<std::pair<double, double>>& pts,
                  double lo, double hi, std::optional<double> min_r2 = std::nullopt)
{
    const auto fit = fit_scaling(pts);
    bool ok = fit.slope >= lo && fit.slope <= hi;
    std::string detail = what + " slope " + num(fit.slope) + " in [" + num(lo) + "," + num(hi) + "], R2 " + num(fit.r2);
    if (min_r2) {
        ok = ok && fit.r2 >= *min_r2;
        detail += " (>= " + num(*min_r2) + ")";
    }
    return {id, ok, detail};
}

std::vector<Check> position_exponents(const Paths&)
{
    return {slope_check("3a", "alpha", alpha_sweep().position, 1.8, 2.2, 0.98),
            slope_check("3b", "energy", energy_sweep().position, -2.4, -1.6),
            slope_check("3c", "early t", time_sweep().position, 1.7, 2.3)};
}

std::vector<Check> velocity_exponents(const Paths&)
{
    const auto t = slope_check("4", "velocity t", time_sweep().velocity, 0.8, 1.2);
    const auto e = slope_check("4", "velocity energy", energy_sweep().velocity, -1.4, -0.6);
    return {{"4", t.pass && e.pass, t.detail + "; " + e.detail}};
}

// ------------------------------------------------------------ 5

std::vector<Check> structural_stability(const Paths&)
{
    const auto field = dipole();
    const auto bar = lab_metric();
    const Metric eta;
    std::vector<std::pair<double, double>> lorentz, tilde;
    for (double alpha : {0.005, 0.01, 0.02, 0.04}) {
        const auto ens = momentum_ball(3.0, alpha, 4000, 12);
        const auto m = moments(ens);
        const Coeffs tilde_avg = average_numeric(tilde_coeffs(field), ens).at(Vec4::Zero());
        const auto tc = tilde_coeffs(field);
        double wl = 0.0, wt = 0.0;
        for (const auto& s : ens.samples) {
            wl = std::max(wl, bar.norm(difference(field, m, Vec4::Zero(), s.y).exact));
            wt = std::max(wt, bar.norm(tc.at(Vec4::Zero(), s.y).contract(s.y, s.y) - tilde_avg.contract(s.y, s.y)));
        }
        lorentz.emplace_back(alpha, wl);
        tilde.emplace_back(alpha, wt);
    }
    (void)eta;
    const auto fl = fit_scaling(lorentz), ft = fit_scaling(tilde);
    return {{"5a", fl.slope >= 1.8, "Lorentz connection slope " + num(fl.slope) + " (>= 1.8)"},
            {"5b", ft.slope <= 1.3, "tilde connection slope " + num(ft.slope) + " (<= 1.3)"}};
}

// ------------------------------------------------------------ 6

std::vector<Check> decomposition(const Paths&)
{
    Rng rng(2024);
    const std::vector<FaradayField> fields{dipole(), make_preset("normal-quad+dipole", {{"b0", 1.0}, {"b1", 0.5}}),
                                           make_preset("constant-E", {{"E1", 0.3}, {"E2", -0.2}, {"E3", 0.1}}),
                                           make_preset("rf-cavity", {{"E2_0", 0.4}, {"w_rf", 2.0}})};
    double worst = 0.0;
    for (int draw = 0; draw < 1000; ++draw) {
        const auto seed = static_cast<std::uint64_t>(draw + 1);
        const auto ens = rapidity_cap(rng.uniform(0.0, std::acosh(10.0)), rng.uniform(0.005, 0.3), 100, seed);
        const auto m = moments(ens);
        const auto& s = ens.samples[static_cast<std::size_t>(rng.uniform(0.0, 99.999))];
        const Vec4 x(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
        const auto d = difference(fields[draw % fields.size()], m, x, s.y);
        worst = std::max(worst, (d.exact - d.leading - d.o2 - d.o3).cwiseAbs().maxCoeff());
    }
    return {{"6", worst < 1e-10, "1000 draws: max |exact - (leading + O2 + O3)| = " + num(worst) + " (< 1e-10)"}};
}

// ------------------------------------------------------------ 7

std::vector<Check> averaging_oracle(const Paths&)
{
    Rng rng(77);
    double worst = 0.0, torsion_max = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const auto seed = static_cast<std::uint64_t>(trial + 1);
        FaradayField field;
        switch (trial % 4) {
        case 0: field = make_preset("normal-dipole", {{"b0", rng.uniform(-2, 2)}}); break;
        case 1:
            field = make_preset("normal-quad+dipole", {{"b0", rng.uniform(-2, 2)}, {"b1", rng.uniform(-1, 1)}});
            break;
        case 2:
            field = make_preset("constant-B", {{"B1", rng.uniform(-1, 1)}, {"B2", rng.uniform(-1, 1)},
                                               {"B3", rng.uniform(-1, 1)}});
            break;
        default:
            field = make_preset("constant-E", {{"E1", rng.uniform(-1, 1)}, {"E2", rng.uniform(-1, 1)},
                                               {"E3", rng.uniform(-1, 1)}});
        }
        auto ens = rapidity_cap(rng.uniform(0.0, 1.2), rng.uniform(0.05, 0.4), 200, seed);
        for (auto& s : ens.samples) s.w = rng.uniform(0.2, 1.0);
        const Vec4 x(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
        const auto closed = averaged_lorentz_coeffs(field, moments(ens)).table(x);
        const auto numeric = average_numeric(lorentz_coeffs(field).coeffs(), ens).at(x);
        worst = std::max(worst, (closed - numeric).max_abs());
        torsion_max = std::max(torsion_max, torsion(closed).max_abs());
    }
    return {{"7", worst < 1e-12 && torsion_max == 0.0,
             "100 configurations: max |closed - numeric| = " + num(worst) + " (< 1e-12), max torsion " +
                 num(torsion_max) + " (exactly 0)"}};
}

// ------------------------------------------------------------ 8

std::vector<Check> transversality_gauge(const Paths&)
{
    Rng rng(88);
    const Metric eta;
    const auto quad = make_preset("normal-quad+dipole", {{"b0", 1.0}, {"b1", 0.5}});
    double transverse = 0.0;
    for (int n = 0; n < 1000; ++n) {
        const Vec4 y = lift({rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3)});
        const Vec4 x(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
        const Vec4 t = lorentz_t(effective_force(quad, x, eta, 1.0), eta, y).contract(y, y);
        transverse = std::max(transverse, t.cwiseAbs().maxCoeff());
    }

    const double b0 = 0.8, b1 = 0.4;
    auto A = [=](const Vec4& x) { return Vec4(0, -0.5 * b1 * x[3] * x[3], b0 * x[1] - 0.5 * b1 * x[1] * x[1], 0); };
    const auto m = moments(rapidity_cap(0.5, 0.2, 100, 6));
    double gauge = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        Vec4 l;
        Mat4 q;
        for (int i = 0; i < 4; ++i) {
            l[i] = rng.uniform(-1, 1);
            for (int j = 0; j < 4; ++j) q(i, j) = rng.uniform(-1, 1);
        }
        q = (0.5 * (q + q.transpose())).eval();
        const double c = rng.uniform(-1, 1);
        // d(lambda) for lambda = l.x + x.q.x + c x0 x1 x2
        auto dl = [l, q, c](const Vec4& x) {
            Vec4 g = l + 2.0 * q * x;
            g[0] += c * x[1] * x[2];
            g[1] += c * x[0] * x[2];
            g[2] += c * x[0] * x[1];
            return g;
        };
        const auto f1 = from_potential({A, {}}, 1e-4);
        const auto f2 = from_potential({[A, dl](const Vec4& x) { return (A(x) + dl(x)).eval(); }, {}}, 1e-4);
        for (int n = 0; n < 10; ++n) {
            const Vec4 x(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
            const Vec4 y = lift({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
            gauge = std::max(gauge, (lorentz_coeffs(f1).table(x, y) - lorentz_coeffs(f2).table(x, y)).max_abs());
            gauge = std::max(gauge,
                             (averaged_lorentz_coeffs(f1, m).table(x) - averaged_lorentz_coeffs(f2, m).table(x)).max_abs());
        }
    }
    return {{"8", transverse < 1e-12 && gauge < 1e-6,
             "max |T(y,y)| on 1000 samples " + num(transverse) + " (< 1e-12); gauge difference " + num(gauge) +
                 " (< 1e-6)"}};
}

// ------------------------------------------------------------ 9

std::vector<Check> fluid_residual(const Paths&)
{
    FluidCheckConfig cfg;
    cfg.averaged_transport = false;
    std::vector<std::pair<double, double>> pts;
    bool bounded = true;
    std::string worst_slice;
    for (double alpha : {0.01, 0.02, 0.04, 0.08}) {
        const auto rep = fluid_check(dipole(), momentum_ball(10.0, alpha, 500, 1), cfg);
        pts.emplace_back(alpha, rep.lorentz.residual);
        if (!rep.within_bound) {
            bounded = false;
            worst_slice += " alpha=" + num(alpha) + " t=" + num(rep.lorentz.t);
        }
    }
    const auto fit = fit_scaling(pts);
    const auto delta = fluid_check(dipole(), delta_ensemble(lift({0.0, std::sqrt(99.0), 0.0})), cfg);
    const bool delta_ok = delta.lorentz.residual < 10.0 * delta.lorentz.noise_floor;
    const bool slope_ok = fit.slope >= 1.6 && fit.slope <= 2.4;
    return {{"9", slope_ok && delta_ok && bounded,
             "alpha slope " + num(fit.slope) + " in [1.6,2.4]; delta residual " + num(delta.lorentz.residual) +
                 " vs 10 x floor " + num(10.0 * delta.lorentz.noise_floor) + "; residual <= bound + 10 alpha^3 " +
                 (bounded ? "at every probe" : "violated at" + worst_slice)}};
}

// ------------------------------------------------------------ 10

std::vector<Check> beam_optics(const Paths&)
{
    double err = 0.0;
    std::string parts;
    auto note = [&](const std::string& name, double e) {
        err = std::max(err, e);
        parts += name + " " + num(e) + ", ";
    };
    {
        const auto ps = principal_solutions(preset_system("normal-dipole", {{"rho", 1.0}})[0], uniform_grid(0, 2, 1e-2));
        const auto u = solve_hill(ps, 1e-3, 0.0);
        double e = 0.0;
        for (std::size_t n = 0; n < ps.tau.size(); ++n) e = std::max(e, std::abs(u.P[n] - 1e-3 * std::cosh(ps.tau[n])));
        note("dipole cosh", e);
    }
    {
        const double b1 = 0.8;
        const auto ps = principal_solutions(preset_system("normal-quad+dipole", {{"rho", 1.0}, {"b1", b1}})[1],
                                            uniform_grid(0, 10, 1e-2));
        double e = 0.0;
        for (std::size_t n = 0; n < ps.tau.size(); ++n)
            e = std::max(e, std::abs(ps.C[n] - std::cos(std::sqrt(b1) * ps.tau[n])));
        note("quadrupole cos", e);
    }
    {
        const double E2 = 0.6, xp = 2e-3;
        const auto ps = principal_solutions(preset_system("longitudinal-E", {{"E2", E2}})[0], uniform_grid(0, 5, 1e-2));
        const auto u = solve_hill(ps, 0.0, xp);
        double e = 0.0;
        for (std::size_t n = 0; n < ps.tau.size(); ++n)
            e = std::max(e, std::abs(u.P[n] + (xp / E2) * (std::exp(-E2 * ps.tau[n]) - 1.0)));
        note("constant-E exponential", e);
    }
    {
        const auto ps = principal_solutions(HillSystem::constant("u", 1.0), uniform_grid(0, 10, 1e-2));
        const auto P = particular_solution([](double t) { return std::cos(t); }, ps);
        double e = 0.0;
        for (std::size_t n = 0; n < ps.tau.size(); ++n)
            e = std::max(e, std::abs(P.P[n] - 0.5 * ps.tau[n] * std::sin(ps.tau[n])));
        note("resonance", e);
    }
    double drift = 0.0;
    const OpticsParams params{{"rho", 1.3}, {"b0", 0.4}, {"b1", 0.7}, {"E2", 0.3}, {"E2_0", 0.2}, {"gamma", 2.0}};
    for (const auto& name : optics_preset_names())
        for (const auto& sys : preset_system(name, params))
            drift = std::max(drift, principal_solutions(sys, uniform_grid(0, 8, 1e-2)).max_wronskian_drift());

    const auto coeffs = averaged_lorentz_coeffs(make_preset("normal-quad+dipole", {{"b0", 1.0}, {"b1", 0.5}}),
                                                moments(momentum_ball(3.0, 0.1, 200, 4)))
                            .coeffs();
    const Vec4 y0 = lift({0.1, 2.0, 0.05});
    const Vec4 dx(0.0, 0.3, 0.0, -0.2), dy(0.0, 0.1, 0.05, 0.2);
    const double eps = 1e-6, tau1 = 2.0;
    IntegratorConfig cfg;
    cfg.step = 1e-3;
    const auto plus = push_connection(coeffs, {0.0, eps * dx, y0 + eps * dy}, tau1, cfg).back();
    const auto minus = push_connection(coeffs, {0.0, -eps * dx, y0 - eps * dy}, tau1, cfg).back();
    const Vec4 fd = (plus.x - minus.x) / (2 * eps);
    const ReferenceCurve ref(push_connection(coeffs, {0.0, Vec4::Zero(), y0}, tau1, cfg));
    const auto jac = integrate_jacobi(coeffs, ref, {0.0, dx, dy}, tau1, 1e-2).back();
    const double jac_err = (jac.xi - fd).norm() / fd.norm();

    return {{"10", err < 1e-6 && drift < 1e-9 && jac_err < 1e-3,
             parts + "all < 1e-6; Wronskian drift " + num(drift) + " (< 1e-9); Jacobi vs geodesic variation " +
                 num(jac_err) + " (< 1e-3)"}};
}

// ------------------------------------------------------------ 11

std::vector<Check> offset_collectivity(const Paths&)
{
    const auto field = dipole();
    std::vector<double> times;
    for (int k = 1; k <= 40; ++k) times.push_back(0.05 * k);
    auto peak = [](const OffsetReport& r) {
        double m = 0.0;
        for (std::size_t k = 0; k < r.tau.size(); ++k) m = std::max(m, std::hypot(r.off1[k], r.off3[k]));
        return m;
    };
    double delta_peak = 0.0;
    for (auto mode : {OffsetMode::full, OffsetMode::frozen})
        delta_peak = std::max(delta_peak, peak(averaged_offset(
                                              field, offset_inputs(field, delta_ensemble(lift({0.0, 3.0, 0.0})), times, 1e-2),
                                              mode)));
    const double r0 = std::acosh(5.0);
    std::vector<std::pair<double, double>> pts;
    bool increasing = true;
    for (double r_cap : {0.005, 0.01, 0.02, 0.04}) {
        const auto ens = rapidity_cap(r0, r_cap, 400, 9);
        const double off = peak(averaged_offset(field, offset_inputs(field, ens, times, 1e-2)));
        if (!pts.empty() && !(off > pts.back().second)) increasing = false;
        pts.emplace_back(ens.params.at("alpha"), off);
    }
    const auto fit = fit_scaling(pts);
    std::string series;
    for (const auto& [a, o] : pts) series += " " + num(a) + ":" + num(o);
    const bool ok = delta_peak < 1e-12 && pts.front().second > 0.0 && increasing;
    return {{"11", ok,
             "delta max |Off| " + num(delta_peak) + " (< 1e-12); caps alpha:|Off|" + series + ", increasing " +
                 (increasing ? "yes" : "no") + ", fitted slope " + num(fit.slope)}};
}

// ------------------------------------------------------------ 12

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

bool same_tree(const fs::path& a, const fs::path& b, std::string& why)
{
    std::map<std::string, std::string> fa, fb;
    for (const auto& e : fs::directory_iterator(a)) fa[e.path().filename().string()] = slurp(e.path());
    for (const auto& e : fs::directory_iterator(b)) fb[e.path().filename().string()] = slurp(e.path());
    if (fa.empty()) {
        why = "no output files";
        return false;
    }
    for (const auto& [name, body] : fa)
        if (!fb.count(name) || fb[name] != body) {
            why = name + " differs";
            return false;
        }
    return fa.size() == fb.size();
}

std::vector<Check> determinism(const Paths& paths)
{
    auto run_library = [](unsigned threads) {
        CompareOptions opt;
        opt.threads = threads;
        const auto rep = compare_trajectories(dipole(), momentum_ball(10.0, 0.02, 500, 42), start_on_support(10.0, 0.02),
                                              {0.5, 1.0, 1.5}, {}, opt);
        std::ostringstream os;
        write_comparison_csv(os, rep);
        write_ensemble_csv(os, momentum_ball(10.0, 0.02, 500, 42));
        return os.str();
    };
    const bool lib_ok = run_library(1) == run_library(1) && run_library(1) == run_library(3);
    std::string detail = std::string("library outputs ") + (lib_ok ? "byte-identical" : "differ");
    bool ok = lib_ok;
    if (paths.cli && paths.configs) {
        const fs::path root = fs::temp_directory_path() / "lorentzavg_acceptance_12";
        fs::remove_all(root);
        for (const std::string cfg : {"compare_dipole", "sweep_alpha", "offset_dipole"}) {
            for (const std::string run : {"a", "b"}) {
                const std::string cmd = *paths.cli + " " + (cfg.rfind("sweep", 0) == 0 ? "sweep" : cfg.substr(0, cfg.find('_'))) +
                                        " --config " + (fs::path(*paths.configs) / (cfg + ".json")).string() +
                                        " --out " + (root / cfg / run).string() + (run == "b" ? " --threads 2" : "") +
                                        " > /dev/null";
                if (std::system(cmd.c_str()) != 0) {
                    ok = false;
                    detail += "; cli " + cfg + " run failed";
                }
            }
            std::string why;
            const bool same = same_tree(root / cfg / "a", root / cfg / "b", why);
            ok = ok && same;
            detail += "; cli " + cfg + (same ? " byte-identical" : " " + why);
        }
        fs::remove_all(root);
    } else {
        detail += "; cli not exercised (pass --cli and --configs)";
    }
    return {{"12", ok, detail}};
}

struct Criterion {
    std::string id;
    std::string title;
    std::function<std::vector<Check>(const Paths&)> run;
};

const std::vector<Criterion>& criteria()
{
    static const std::vector<Criterion> list{
        {"1", "gyromotion oracle", gyromotion},
        {"2", "coincidence limit", coincidence},
        {"3", "position separation exponents", position_exponents},
        {"4", "velocity separation exponents", velocity_exponents},
        {"5", "structural stability discrimination", structural_stability},
        {"6", "exact decomposition", decomposition},
        {"7", "averaging oracle", averaging_oracle},
        {"8", "transversality and gauge", transversality_gauge},
        {"9", "fluid residual", fluid_residual},
        {"10", "beam optics closed forms", beam_optics},
        {"11", "off-set collectivity", offset_collectivity},
        {"12", "determinism", determinism},
    };
    return list;
}

} // namespace

int main(int argc, char** argv)
{
    std::optional<std::string> only;
    Paths paths;
    for (int k = 1; k < argc; ++k) {
        const std::string a = argv[k];
        auto value = [&]() -> std::string {
            if (k + 1 >= argc) {
                std::cerr << a << " needs a value\n";
                std::exit(2);
            }
            return argv[++k];
        };
        if (a == "--only") only = value();
        else if (a == "--cli") paths.cli = value();
        else if (a == "--configs") paths.configs = value();
        else {
            std::cerr << "usage: acceptance [--only <id>] [--cli <lorentzavg>] [--configs <dir>]\n";
            return 2;
        }
    }
    const std::string base = only ? only->substr(0, only->find_first_not_of("0123456789")) : "";
    bool all_ok = true, any = false;
    for (const auto& c : criteria()) {
        if (only && c.id != base) continue;
        const auto start = std::chrono::steady_clock::now();
        std::vector<Check> checks;
        try {
            checks = c.run(paths);
        } catch (const std::exception& e) {
            checks = {{c.id, false, std::string("error: ") + e.what()}};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (only && *only != base) {
            std::vector<Check> kept;
            for (const auto& ch : checks)
                if (ch.id == *only) kept.push_back(ch);
            checks = kept;
        }
        if (checks.empty()) continue;
        any = true;
        bool ok = true;
        std::string detail;
        for (const auto& ch : checks) {
            ok = ok && ch.pass;
            detail += (detail.empty() ? "" : " | ") + (checks.size() > 1 || ch.id != c.id ? ch.id + ": " : "") +
                      ch.detail + (checks.size() > 1 ? (ch.pass ? " [pass]" : " [FAIL]") : "");
        }
        const std::string label = only ? *only : c.id;
        std::cout << (ok ? "PASS " : "FAIL ") << label << "  " << c.title << "  " << detail << "  (" << num(secs)
                  << " s)" << std::endl;
        all_ok = all_ok && ok;
    }
    if (!any) {
        std::cerr << "no criterion matches '" << only.value_or("") << "'\n";
        return 2;
    }
    return all_ok ? 0 : 1;
}

#include "config.hpp"

#include <lorentzavg/analysis.hpp>
#include <lorentzavg/beamline.hpp>
#include <lorentzavg/connections.hpp>
#include <lorentzavg/distribution.hpp>
#include <lorentzavg/dynamics.hpp>
#include <lorentzavg/fields.hpp>
#include <lorentzavg/fluid.hpp>
#include <lorentzavg/io.hpp>

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace lorentzavg;
using namespace lorentzavg::cli;

namespace {

struct Options {
    std::string command;
    std::string config_path;
    std::string out_dir = "out";
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    bool dry_run = false;
};

struct Run {
    Options opt;
    json config;
    Section root{nullptr, "config"};
    unsigned threads = 1;
    json summary = json::object();
    json assertions = json::object();
    std::vector<std::string> outputs;

    void check(const std::string& name, double value, double limit, bool upper)
    {
        const bool ok = upper ? value <= limit : value >= limit;
        assertions[name] = {{"value", value}, {"limit", limit}, {"kind", upper ? "max" : "min"}, {"passed", ok}};
    }
    void check_flag(const std::string& name, bool value, bool expected)
    {
        assertions[name] = {{"value", value}, {"expected", expected}, {"passed", value == expected}};
    }
    bool passed() const
    {
        for (const auto& [k, v] : assertions.items())
            if (!v["passed"].get<bool>()) return false;
        return true;
    }

    std::ofstream open(const std::string& name)
    {
        outputs.push_back(name);
        std::ofstream os(fs::path(opt.out_dir) / name, std::ios::binary);
        if (!os) throw ConfigError("cannot write " + (fs::path(opt.out_dir) / name).string());
        return os;
    }
};

// ------------------------------------------------------------ config pieces

FaradayField field_from(const Section& s)
{
    if (!s.present()) throw ConfigError(s.path() + ": required");
    return make_preset(s.text("preset"), s.number_map("params"));
}

double charge_from(const Section& s) { return s.number("charge", 1.0); }

IntegratorConfig integrator_from(const Section& s)
{
    IntegratorConfig cfg;
    if (!s.present()) return cfg;
    cfg.method = s.text("method", "rk4") == "rk45" ? IntegratorConfig::Method::rk45 : IntegratorConfig::Method::rk4;
    cfg.step = s.number("step", cfg.step);
    cfg.tolerance = s.number("tolerance", cfg.tolerance);
    cfg.renormalize = s.flag("renormalize", cfg.renormalize);
    const auto every = s.integer("record_every", 1);
    if (every < 1) throw ConfigError(s.path() + ".record_every: must be at least 1");
    cfg.record_every = static_cast<std::size_t>(every);
    if (!(cfg.step > 0.0)) throw ConfigError(s.path() + ".step: must be positive");
    return cfg;
}

SpatialLayout layout_from(const Section& s)
{
    SpatialLayout l;
    if (!s.present()) return l;
    const auto kind = s.text("kind", "point");
    l.kind = kind == "gaussian" ? SpatialLayout::Kind::gaussian
             : kind == "lattice" ? SpatialLayout::Kind::lattice
                                 : SpatialLayout::Kind::point;
    l.spread = s.number("spread", 0.0);
    l.spacing = s.number("spacing", 1.0);
    l.sites = static_cast<int>(s.integer("sites", 1));
    return l;
}

Vec4 velocity_from(const Section& s, const std::string& key)
{
    const auto v = s.numbers(key, 3);
    return lift(Eigen::Vector3d(v[0], v[1], v[2]));
}

std::uint64_t seed_for(const Run& run, const Section& s)
{
    if (run.opt.seed) return *run.opt.seed;
    if (!s.has("seed"))
        throw ConfigError(s.path() + ".seed: required for generator '" + s.text("generator") +
                          "' (or pass --seed)");
    const auto seed = s.integer("seed");
    if (seed < 0) throw ConfigError(s.path() + ".seed: must be non-negative");
    return static_cast<std::uint64_t>(seed);
}

struct EnsembleOverrides {
    std::optional<double> energy, alpha;
};

Ensemble ensemble_from(const Run& run, const Section& s, const EnsembleOverrides& ov = {})
{
    if (!s.present()) throw ConfigError(s.path() + ": required");
    const auto gen = s.text("generator");
    const auto layout = layout_from(s.sub("layout"));
    const int axis = static_cast<int>(s.integer("axis", 2));
    if (axis < 1 || axis > 3) throw ConfigError(s.path() + ".axis: must be 1, 2 or 3");
    auto count = [&] {
        const auto n = s.integer("n");
        if (n < 1) throw ConfigError(s.path() + ".n: must be positive");
        return static_cast<std::size_t>(n);
    };
    if (gen == "delta") return delta_ensemble(velocity_from(s, "velocity"), layout);
    if (gen == "csv") {
        std::ifstream in(s.text("path"));
        if (!in) throw ConfigError(s.path() + ".path: cannot open '" + s.text("path") + "'");
        return read_ensemble_csv(in);
    }
    const auto seed = seed_for(run, s);
    if (gen == "momentum-ball") {
        auto ens = momentum_ball(ov.energy.value_or(s.number("energy")), ov.alpha.value_or(s.number("alpha")),
                                 count(), seed, axis, layout);
        ens.params["axis"] = axis;
        return ens;
    }
    if (gen == "rapidity-cap") return rapidity_cap(s.number("r0"), s.number("r_cap"), count(), seed, axis, layout);
    return rapidity_gaussian(s.number("r0"), s.number("sigma"), s.number("cutoff", 3.0), count(), seed, axis, layout);
}

std::vector<double> times_from(const Section& s)
{
    if (!s.present()) throw ConfigError(s.path() + ": required");
    if (s.has("times")) {
        auto t = s.numbers("times");
        if (t.empty()) throw ConfigError(s.path() + ".times: empty");
        for (std::size_t k = 1; k < t.size(); ++k)
            if (!(t[k] > t[k - 1])) throw ConfigError(s.path() + ".times: must ascend strictly");
        if (t.front() < 0.0) throw ConfigError(s.path() + ".times: must be non-negative");
        return t;
    }
    const double t1 = s.number("t1");
    const auto n = s.integer("samples", 10);
    if (!(t1 > 0.0) || n < 1) throw ConfigError(s.path() + ": need t1 > 0 and samples >= 1");
    std::vector<double> t;
    for (long long k = 1; k <= n; ++k) t.push_back(t1 * static_cast<double>(k) / static_cast<double>(n));
    return t;
}

TrajectoryState initial_from(const Section& s, const Ensemble* ens)
{
    TrajectoryState st;
    if (s.has("x")) {
        const auto x = s.numbers("x", 4);
        st.x = Vec4(x[0], x[1], x[2], x[3]);
    }
    if (s.has("velocity")) {
        st.y = velocity_from(s, "velocity");
        return st;
    }
    if (ens && ens->params.count("p_par")) {
        const auto dir = s.has("support_direction") ? s.numbers("support_direction", 3) : std::vector<double>{1, 1, 1};
        const BeamShape shape{ens->params.at("p_par"), ens->params.at("rho"),
                              static_cast<int>(ens->params.count("axis") ? ens->params.at("axis") : 2)};
        st.y = shape.support_point(Eigen::Vector3d(dir[0], dir[1], dir[2]), s.number("support_fraction", 0.8));
        return st;
    }
    if (ens && !ens->empty()) {
        const MomentSet m = moments(*ens);
        st.y = m.mean / std::sqrt(Metric::minkowski().square(m.mean));
        return st;
    }
    throw ConfigError(s.path() + ".velocity: required");
}

BoundConstants bound_constants_from(const Section& root)
{
    BoundConstants k;
    for (const auto& [key, v] : root.number_map("constants")) {
        if (key == "C") k.C = v;
        else if (key == "C2") k.C2 = v;
        else if (key == "B2") k.B2 = v;
        else if (key == "K") k.K = v;
        else if (key == "K2") k.K2 = v;
        else if (key == "D2") k.D2 = v;
        else throw ConfigError("config.constants: unknown constant '" + key + "'");
    }
    return k;
}

json vec_json(const Vec4& v) { return json::array({v[0], v[1], v[2], v[3]}); }

json ensemble_json(const Ensemble& ens)
{
    json j = {{"generator", ens.generator}, {"n", ens.size()}};
    for (const auto& [k, v] : ens.params) j["params"][k] = v;
    if (!ens.empty()) {
        j["diameter_alpha"] = diameter_alpha(ens, lab_metric());
        j["energy"] = energy(ens);
        j["mean_velocity"] = vec_json(moments(ens).mean);
    }
    return j;
}

void write_plot(Run& run, const std::string& name, const std::string& xn, const std::string& yn,
                const std::vector<double>& xs, const std::vector<double>& ys)
{
    auto os = run.open(name);
    write_series(os, xn, yn, xs, ys);
}

void apply_separation_assertions(Run& run, const Section& a, const ComparisonReport& rep)
{
    if (a.has("max_position_separation"))
        run.check("max_position_separation", rep.max_position_separation(), a.number("max_position_separation"), true);
    if (a.has("max_velocity_separation"))
        run.check("max_velocity_separation", rep.max_velocity_separation(), a.number("max_velocity_separation"), true);
    if (a.has("within_bound")) run.check_flag("within_bound", rep.within_bound, a.flag("within_bound", true));
}

// ------------------------------------------------------------ commands

void cmd_simulate(Run& run)
{
    const auto& root = run.root;
    const auto field = field_from(root.sub("field"));
    const double q = charge_from(root.sub("field"));
    const auto cfg = integrator_from(root.sub("integrator"));
    const auto span = root.sub("span");
    const double tau1 = span.number("t1");
    const auto connection = root.text("connection", "lorentz");
    std::optional<Ensemble> ens;
    if (root.has("ensemble")) ens = ensemble_from(run, root.sub("ensemble"));
    const auto init = initial_from(root.sub("initial"), ens ? &*ens : nullptr);

    TrajectoryRecord rec;
    if (connection == "averaged") {
        if (!ens) throw ConfigError("config.ensemble: required for the averaged connection");
        rec = push_connection(averaged_lorentz_coeffs(field, moments(*ens), Metric::minkowski(), q).coeffs(), init,
                              tau1, cfg);
    } else {
        rec = push_lorentz(field, init, tau1, cfg, Metric::minkowski(), q);
    }
    if (root.text("parametrization", "tau") == "t") rec = to_lab_time(rec, span.number("dt", cfg.step));
    {
        auto os = run.open("trajectory.csv");
        write_trajectory_csv(os, rec);
    }
    std::vector<double> s, x1;
    for (const auto& st : rec.states) {
        s.push_back(st.s);
        x1.push_back(st.x[1]);
    }
    write_plot(run, "trajectory_x1.dat", param_name(rec.param), "x1", s, x1);
    run.summary["connection"] = connection;
    run.summary["steps"] = rec.steps;
    run.summary["max_drift"] = rec.max_drift;
    run.summary["final"] = {{"s", rec.back().s}, {"x", vec_json(rec.back().x)}, {"y", vec_json(rec.back().y)}};
}

void cmd_ensemble(Run& run)
{
    const auto& root = run.root;
    const auto ens = ensemble_from(run, root.sub("ensemble"));
    run.summary["ensemble"] = ensemble_json(ens);
    auto os = run.open("ensemble.csv");
    if (!root.has("span") || !root.has("field")) {
        write_ensemble_csv(os, ens, 0.0);
        return;
    }
    const auto field = field_from(root.sub("field"));
    auto times = times_from(root.sub("span"));
    const auto slices = transport_ensemble(field, ens, times, integrator_from(root.sub("integrator")),
                                           Metric::minkowski(), charge_from(root.sub("field")), run.threads);
    write_ensemble_csv(os, ens, 0.0);
    json per = json::array();
    for (std::size_t k = 0; k < slices.size(); ++k) {
        write_ensemble_csv(os, slices[k], times[k], false);
        per.push_back({{"t", times[k]}, {"energy", energy(slices[k])},
                       {"diameter_alpha", diameter_alpha(slices[k], lab_metric())}});
    }
    run.summary["slices"] = per;
}

void cmd_compare(Run& run)
{
    const auto& root = run.root;
    const auto field = field_from(root.sub("field"));
    const auto ens = ensemble_from(run, root.sub("ensemble"));
    const auto init = initial_from(root.sub("initial"), &ens);
    CompareOptions opt;
    opt.constants = bound_constants_from(root);
    opt.threads = run.threads;
    const auto rep = compare_trajectories(field, ens, init, times_from(root.sub("span")),
                                          integrator_from(root.sub("integrator")), opt, Metric::minkowski(),
                                          charge_from(root.sub("field")));
    {
        auto os = run.open("comparison.csv");
        write_comparison_csv(os, rep);
    }
    write_plot(run, "position_separation.dat", "t", "position_separation", rep.times, rep.position_separation);
    write_plot(run, "velocity_separation.dat", "t", "velocity_separation", rep.times, rep.velocity_separation);
    run.summary["ensemble"] = ensemble_json(ens);
    run.summary["alpha"] = rep.alpha;
    run.summary["energy"] = rep.energy;
    run.summary["field_norm"] = rep.field_norm;
    run.summary["max_position_separation"] = rep.max_position_separation();
    run.summary["max_velocity_separation"] = rep.max_velocity_separation();
    run.summary["within_bound"] = rep.within_bound;
    run.summary["theta_flag"] = rep.theta_flag;
    run.summary["adiabatic_flag"] = rep.adiabatic_flag;
    run.summary["warnings"] = rep.warnings;
    apply_separation_assertions(run, root.sub("assertions"), rep);
}

FluidCheckConfig fluid_config_from(const Run& run, const Section& s)
{
    FluidCheckConfig cfg;
    cfg.threads = run.threads;
    if (!s.present()) return cfg;
    cfg.dt = s.number("dt", cfg.dt);
    cfg.t0 = s.number("t0", cfg.t0);
    cfg.sites = static_cast<int>(s.integer("sites", cfg.sites));
    cfg.spacing = s.number("spacing", cfg.spacing);
    cfg.cells = static_cast<int>(s.integer("cells", cfg.cells));
    cfg.bins = static_cast<int>(s.integer("bins", cfg.bins));
    cfg.allowance = s.number("allowance", cfg.allowance);
    cfg.averaged_transport = s.flag("averaged_transport", cfg.averaged_transport);
    cfg.form = s.text("form", "covariant") == "printed" ? NormalizedForm::printed : NormalizedForm::covariant;
    return cfg;
}

json probe_json(const FluidProbe& p)
{
    return {{"t", p.t},
            {"residual", p.residual},
            {"normalized_residual", p.normalized},
            {"noise_floor", p.noise_floor},
            {"normalized_noise_floor", p.normalized_noise_floor},
            {"bound_rhs", p.bound},
            {"eta_VV", p.eta_VV},
            {"excluded_components", p.bound_detail.excluded},
            {"bins", p.bound_detail.bins}};
}

void cmd_fluid_check(Run& run)
{
    const auto& root = run.root;
    const auto field = field_from(root.sub("field"));
    auto cfg = fluid_config_from(run, root.sub("fluid"));
    cfg.integrator = integrator_from(root.sub("integrator"));
    const auto ens = ensemble_from(run, root.sub("ensemble"));
    const auto rep = fluid_check(field, ens, cfg, Metric::minkowski(), charge_from(root.sub("field")));
    {
        auto os = run.open("fluid.csv");
        write_fluid_csv(os, rep);
    }
    run.summary["alpha"] = rep.alpha;
    run.summary["energy"] = rep.energy;
    run.summary["lorentz"] = probe_json(rep.lorentz);
    if (rep.averaged) run.summary["averaged"] = probe_json(*rep.averaged);
    run.summary["within_bound"] = rep.within_bound;
    run.summary["allowance"] = rep.allowance;
    const auto a = root.sub("assertions");
    if (a.has("within_bound")) run.check_flag("within_bound", rep.within_bound, a.flag("within_bound", true));
}

double sweep_response(Run& run, const FaradayField& field, double q, const Ensemble& ens, double t,
                      const std::string& measure)
{
    const auto& root = run.root;
    if (measure == "fluid") {
        auto cfg = fluid_config_from(run, root.sub("fluid"));
        cfg.integrator = integrator_from(root.sub("integrator"));
        return fluid_check(field, ens, cfg, Metric::minkowski(), q).lorentz.residual;
    }
    CompareOptions opt;
    opt.constants = bound_constants_from(root);
    opt.threads = run.threads;
    const auto rep = compare_trajectories(field, ens, initial_from(root.sub("initial"), &ens), {t},
                                          integrator_from(root.sub("integrator")), opt, Metric::minkowski(), q);
    return measure == "velocity" ? rep.velocity_separation.back() : rep.position_separation.back();
}

void cmd_sweep(Run& run)
{
    const auto& root = run.root;
    const auto field = field_from(root.sub("field"));
    const double q = charge_from(root.sub("field"));
    const auto s = root.sub("sweep");
    if (!s.present()) throw ConfigError("config.sweep: required");
    const auto parameter = s.text("parameter");
    const auto measure = s.text("measure", "position");
    const auto values = s.numbers("values");
    if (values.size() < 4) throw ConfigError("config.sweep.values: need at least 4 points");
    if (parameter == "t" && measure == "fluid") throw ConfigError("config.sweep: fluid residual cannot sweep t");
    std::vector<std::pair<double, double>> points;
    if (parameter == "t") {
        const auto ens = ensemble_from(run, root.sub("ensemble"));
        CompareOptions opt;
        opt.constants = bound_constants_from(root);
        opt.threads = run.threads;
        const auto rep = compare_trajectories(field, ens, initial_from(root.sub("initial"), &ens), values,
                                              integrator_from(root.sub("integrator")), opt, Metric::minkowski(), q);
        for (std::size_t k = 0; k < values.size(); ++k)
            points.emplace_back(values[k], measure == "velocity" ? rep.velocity_separation[k]
                                                                 : rep.position_separation[k]);
    } else {
        const double t = measure == "fluid" ? 0.0 : s.number("t");
        for (double v : values) {
            EnsembleOverrides ov;
            (parameter == "alpha" ? ov.alpha : ov.energy) = v;
            points.emplace_back(v, sweep_response(run, field, q, ensemble_from(run, root.sub("ensemble"), ov), t,
                                                  measure));
        }
    }
    {
        auto os = run.open("sweep.csv");
        CsvWriter w(os);
        w.header({parameter, measure});
        for (const auto& [x, y] : points) w.row({x, y});
    }
    {
        auto os = run.open("sweep_loglog.dat");
        write_loglog_series(os, parameter, measure, points);
    }
    const auto fit = fit_scaling(points, parameter);
    run.summary["parameter"] = parameter;
    run.summary["measure"] = measure;
    run.summary["points"] = points;
    run.summary["slope"] = fit.slope;
    run.summary["intercept"] = fit.intercept;
    run.summary["r2"] = fit.r2;
    const auto a = root.sub("assertions");
    if (a.has("slope_min")) run.check("slope_min", fit.slope, a.number("slope_min"), false);
    if (a.has("slope_max")) run.check("slope_max", fit.slope, a.number("slope_max"), true);
    if (a.has("min_r2")) run.check("min_r2", fit.r2, a.number("min_r2"), false);
}

// Closed form of u'' + c u' + K u = 0 for constant coefficients.
std::optional<std::pair<double, double>> constant_hill_closed_form(const HillSystem& sys, double u0, double up0,
                                                                   double t)
{
    if (!sys.K_const || !sys.damping_const) return std::nullopt;
    const double K = *sys.K_const, c = *sys.damping_const;
    if (c != 0.0) {
        if (K != 0.0) return std::nullopt;
        const double e = std::exp(-c * t);
        return std::pair{u0 + up0 * (1.0 - e) / c, up0 * e};
    }
    if (K > 0.0) {
        const double w = std::sqrt(K);
        return std::pair{u0 * std::cos(w * t) + up0 * std::sin(w * t) / w,
                         -u0 * w * std::sin(w * t) + up0 * std::cos(w * t)};
    }
    if (K < 0.0) {
        const double w = std::sqrt(-K);
        return std::pair{u0 * std::cosh(w * t) + up0 * std::sinh(w * t) / w,
                         u0 * w * std::sinh(w * t) + up0 * std::cosh(w * t)};
    }
    return std::pair{u0 + up0 * t, up0};
}

int component_index(const std::string& label) { return label.back() - '0'; }

void cmd_beamline(Run& run)
{
    const auto& root = run.root;
    const auto b = root.sub("beamline");
    if (!b.present()) throw ConfigError("config.beamline: required");
    BeamlineOptions bopt;
    bopt.dipole_sign = b.number("dipole_sign", 1.0);
    const auto systems = preset_system(b.text("preset"), b.number_map("params"), bopt);
    const auto xi = b.has("xi") ? b.numbers("xi", 4) : std::vector<double>(4, 0.0);
    const auto xip = b.has("xip") ? b.numbers("xip", 4) : std::vector<double>(4, 0.0);
    const double tau1 = b.number("tau1");
    const double step = b.number("step", 1e-2);
    const auto grid = uniform_grid(0.0, tau1, step);

    JacobiRecord rec;
    for (double t : grid) rec.states.push_back({t, Vec4::Zero(), Vec4::Zero()});
    double drift = 0.0, closed_error = 0.0;
    json per = json::object();
    for (const auto& sys : systems) {
        const int c = component_index(sys.component);
        const auto ps = principal_solutions(sys, grid);
        const auto u = solve_hill(ps, xi[c], xip[c]);
        double err = 0.0;
        for (std::size_t n = 0; n < grid.size(); ++n) {
            rec.states[n].xi[c] = u.P[n];
            rec.states[n].xip[c] = u.Pp[n];
            if (auto cf = constant_hill_closed_form(sys, xi[c], xip[c], grid[n]))
                err = std::max(err, std::abs(cf->first - u.P[n]));
        }
        drift = std::max(drift, ps.max_wronskian_drift());
        closed_error = std::max(closed_error, err);
        per[sys.component] = {{"K", sys.K_const ? json(*sys.K_const) : json()},
                              {"damping", sys.damping_const ? json(*sys.damping_const) : json()},
                              {"wronskian_drift", ps.max_wronskian_drift()},
                              {"closed_form_error", err},
                              {"final", u.P.back()}};
        write_plot(run, "beamline_" + sys.component + ".dat", "tau", sys.component, u.tau, u.P);
    }
    {
        auto os = run.open("beamline.csv");
        write_beamline_csv(os, rec);
    }
    run.summary["preset"] = b.text("preset");
    run.summary["systems"] = per;
    run.summary["max_wronskian_drift"] = drift;
    run.summary["max_closed_form_error"] = closed_error;

    if (b.flag("jacobi", false)) {
        const auto field = field_from(root.sub("field"));
        const auto ens = ensemble_from(run, root.sub("ensemble"));
        const auto coeffs =
            averaged_lorentz_coeffs(field, moments(ens), Metric::minkowski(), charge_from(root.sub("field"))).coeffs();
        IntegratorConfig cfg = integrator_from(root.sub("integrator"));
        const auto init = initial_from(root.sub("initial"), &ens);
        const ReferenceCurve ref(push_connection(coeffs, init, tau1, cfg));
        const auto jac = integrate_jacobi(coeffs, ref, {0.0, Vec4(xi[0], xi[1], xi[2], xi[3]),
                                                        Vec4(xip[0], xip[1], xip[2], xip[3])},
                                          tau1, step);
        auto os = run.open("jacobi.csv");
        write_beamline_csv(os, jac);
        run.summary["jacobi_final_xi"] = vec_json(jac.back().xi);
    }
    const auto a = root.sub("assertions");
    if (a.has("max_wronskian_drift")) run.check("max_wronskian_drift", drift, a.number("max_wronskian_drift"), true);
    if (a.has("max_closed_form_error"))
        run.check("max_closed_form_error", closed_error, a.number("max_closed_form_error"), true);
}

void cmd_offset(Run& run)
{
    const auto& root = run.root;
    const auto field = field_from(root.sub("field"));
    const double q = charge_from(root.sub("field"));
    const auto ens = ensemble_from(run, root.sub("ensemble"));
    const auto span = root.sub("span");
    const auto times = times_from(span);
    const double dt = span.number("dt", 1e-2);
    const auto o = root.sub("offset");
    const auto mode = o.text("mode", "full") == "frozen" ? OffsetMode::frozen : OffsetMode::full;
    std::optional<std::array<HillSystem, 2>> systems;
    if (o.has("optics")) {
        const auto optics = o.sub("optics");
        BeamlineOptions bopt;
        bopt.dipole_sign = optics.number("dipole_sign", 1.0);
        const auto sys = preset_system(optics.text("preset"), optics.number_map("params"), bopt);
        if (sys.size() != 2) throw ConfigError("config.offset.optics: preset has no transverse pair");
        systems = std::array<HillSystem, 2>{sys[0], sys[1]};
    }
    const auto in = offset_inputs(field, ens, times, dt, Metric::minkowski(), q, run.threads);
    const auto rep = averaged_offset(field, in, mode, systems, Metric::minkowski(), q);
    {
        auto os = run.open("offset.csv");
        write_offset_csv(os, rep);
    }
    write_plot(run, "offset_off1.dat", "tau", "off1", rep.tau, rep.off1);
    write_plot(run, "offset_off3.dat", "tau", "off3", rep.tau, rep.off3);
    double peak = 0.0;
    for (std::size_t k = 0; k < rep.tau.size(); ++k) peak = std::max(peak, std::hypot(rep.off1[k], rep.off3[k]));
    run.summary["ensemble"] = ensemble_json(ens);
    run.summary["mode"] = mode == OffsetMode::full ? "full" : "frozen";
    run.summary["max_offset"] = peak;
    run.summary["final"] = {{"tau", rep.tau.back()}, {"off1", rep.off1.back()}, {"off3", rep.off3.back()}};
    const auto a = root.sub("assertions");
    if (a.has("max_offset")) run.check("max_offset", peak, a.number("max_offset"), true);
}

void cmd_validity(Run& run)
{
    const auto v = run.root.sub("validity");
    if (!v.present()) throw ConfigError("config.validity: required");
    ValidityConstants k;
    for (const auto& [key, value] : v.number_map("constants")) {
        if (key == "C1") k.C1 = value;
        else if (key == "K") k.K = value;
        else if (key == "A") k.A = value;
        else throw ConfigError("config.validity.constants: unknown constant '" + key + "'");
    }
    const auto r = validity_horizon(v.number("E0"), v.number("alpha"), v.number("fnorm"), v.number("L_geom", 1.0),
                                    v.number("L_bar", 1.0), k);
    run.summary["t_max_position"] = r.t_max_position;
    run.summary["t_max_velocity"] = r.t_max_velocity;
    run.summary["L_max"] = r.L_max;
    run.summary["weak"] = r.weak;
    run.summary["constants"] = {{"C1", k.C1}, {"K", k.K}, {"A", k.A}};
}

const std::map<std::string, std::function<void(Run&)>>& commands()
{
    static const std::map<std::string, std::function<void(Run&)>> table{
        {"simulate", cmd_simulate}, {"ensemble", cmd_ensemble},        {"compare", cmd_compare},
        {"sweep", cmd_sweep},       {"fluid-check", cmd_fluid_check}, {"beamline", cmd_beamline},
        {"offset", cmd_offset},     {"validity", cmd_validity}};
    return table;
}

json load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config '" + path + "'");
    json j;
    try {
        j = json::parse(in, nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
    validate(j, config_schema(), "config");
    return j;
}

int execute(const Options& opt)
{
    Run run;
    run.opt = opt;
    run.config = load_config(opt.config_path);
    run.root = Section(&run.config, "config");
    if (run.root.has("command") && run.root.text("command") != opt.command)
        throw ConfigError("config.command: '" + run.root.text("command") + "' does not match '" + opt.command + "'");
    const auto threads = opt.threads ? static_cast<long long>(*opt.threads) : run.root.integer("threads", 1);
    if (threads < 1) throw ConfigError("threads must be at least 1");
    run.threads = static_cast<unsigned>(threads);

    json plan = {{"command", opt.command}, {"config", run.config}, {"out", opt.out_dir}, {"threads", run.threads}};
    if (opt.seed) plan["seed_override"] = *opt.seed;
    if (opt.dry_run) {
        std::cout << plan.dump(2) << '\n';
        return 0;
    }
    fs::create_directories(opt.out_dir);
    commands().at(opt.command)(run);

    json summary = run.summary;
    summary["command"] = opt.command;
    summary["assertions"] = run.assertions;
    summary["passed"] = run.passed();
    run.outputs.push_back("summary.json");
    summary["outputs"] = run.outputs;
    {
        std::ofstream os(fs::path(opt.out_dir) / "summary.json", std::ios::binary);
        os << summary.dump(2) << '\n';
    }
    std::cout << opt.command << ": " << (run.passed() ? "passed" : "FAILED") << " (" << opt.out_dir
              << "/summary.json)\n";
    return run.passed() ? 0 : 1;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Lorentz-force and averaged-connection beam dynamics experiments"};
    app.require_subcommand(1);
    Options opt;
    std::uint64_t seed = 0;
    unsigned threads = 1;
    for (const auto& name : command_names()) {
        static const std::map<std::string, std::string> about{
            {"simulate", "integrate one trajectory of the Lorentz or averaged connection"},
            {"ensemble", "sample an ensemble and write it as csv"},
            {"compare", "track the Lorentz centroid against the averaged trajectory"},
            {"sweep", "fit a log-log scaling exponent over alpha, energy or time"},
            {"fluid-check", "evaluate the fluid residual against its bound"},
            {"beamline", "solve the linear optics of a preset and optionally the Jacobi equation"},
            {"offset", "compute the averaged off-set of a beam"},
            {"validity", "report the validity horizons"}};
        auto* sub = app.add_subcommand(name, about.at(name));
        sub->add_option("--config", opt.config_path, "experiment configuration (JSON)")->required();
        sub->add_option("--out", opt.out_dir, "output directory");
        sub->add_option("--seed", seed, "seed override for stochastic generators");
        sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
        sub->add_flag("--dry-run", opt.dry_run, "print the resolved plan without computing");
        sub->callback([&opt, name] { opt.command = name; });
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    auto* chosen = app.get_subcommands().front();
    if (chosen->count("--seed")) opt.seed = seed;
    if (chosen->count("--threads")) opt.threads = threads;

    try {
        return execute(opt);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return 3;
    } catch (const DomainError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const json::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    }
}

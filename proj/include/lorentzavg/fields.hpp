#pragma once

#include "errors.hpp"
#include "geometry.hpp"
#include "tensor.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace lorentzavg {

using FieldGradient = std::array<Mat4, 4>; // g[l] = d_l F_ij

using Params = std::map<std::string, double>;

inline double param(const Params& p, const std::string& key)
{
    auto it = p.find(key);
    if (it == p.end()) throw DomainError("missing parameter '" + key + "'");
    return it->second;
}

inline double param_or(const Params& p, const std::string& key, double fallback)
{
    auto it = p.find(key);
    return it == p.end() ? fallback : it->second;
}

// Faraday 2-form with lowered indices. An analytic gradient may be supplied;
// otherwise derivatives come from second-order central differences.
class FaradayField {
public:
    using Evaluator = std::function<Mat4(const Vec4&)>;
    using GradientFn = std::function<FieldGradient(const Vec4&)>;
    using Domain = std::function<bool(const Vec4&)>;

    FaradayField() : FaradayField("zero", [](const Vec4&) { return Mat4::Zero().eval(); }) {}

    FaradayField(std::string name, Evaluator lowered, GradientFn gradient = {}, double fd_step = 1e-4)
        : name_(std::move(name)), lowered_(std::move(lowered)), gradient_(std::move(gradient)),
          fd_step_(fd_step)
    {
    }

    const std::string& name() const { return name_; }
    bool has_analytic_gradient() const { return static_cast<bool>(gradient_); }
    double fd_step() const { return fd_step_; }

    void restrict_to(Domain d) { domain_ = std::move(d); }

    Mat4 eval(const Vec4& x) const
    {
        if (domain_ && !domain_(x)) throw DomainError("field '" + name_ + "' evaluated outside its domain");
        return lowered_(x);
    }

    Mat4 mixed(const Vec4& x, const Metric& metric = Metric::minkowski()) const
    {
        return metric.raise_first(eval(x));
    }

    FieldGradient gradient(const Vec4& x) const
    {
        if (gradient_) return gradient_(x);
        FieldGradient g;
        for (int l = 0; l < 4; ++l) {
            const Vec4 dx = fd_step_ * unit(l);
            g[l] = (eval(x + dx) - eval(x - dx)) / (2.0 * fd_step_);
        }
        return g;
    }

    // d_l F^i_j
    std::array<Mat4, 4> mixed_gradient(const Vec4& x, const Metric& metric = Metric::minkowski()) const
    {
        auto g = gradient(x);
        for (auto& m : g) m = metric.raise_first(m);
        return g;
    }

private:
    std::string name_;
    Evaluator lowered_;
    GradientFn gradient_;
    double fd_step_ = 1e-4;
    Domain domain_;
};

namespace detail {

inline Mat4 antisym(int i, int j, double v)
{
    Mat4 m = Mat4::Zero();
    m(i, j) = v;
    m(j, i) = -v;
    return m;
}

inline FieldGradient zero_gradient()
{
    return {Mat4::Zero(), Mat4::Zero(), Mat4::Zero(), Mat4::Zero()};
}

} // namespace detail

inline FaradayField constant_field(std::string name, const Mat4& lowered)
{
    return FaradayField(
        std::move(name), [lowered](const Vec4&) { return lowered; },
        [](const Vec4&) { return detail::zero_gradient(); });
}

enum class PresetKind {
    zero,
    constant_e,
    constant_b,
    normal_dipole,
    skew_dipole,
    normal_quad_dipole,
    quad45_dipole,
    longitudinal_e,
    rf_cavity,
};

inline const std::vector<std::pair<std::string, PresetKind>>& preset_names()
{
    static const std::vector<std::pair<std::string, PresetKind>> names{
        {"zero", PresetKind::zero},
        {"constant-E", PresetKind::constant_e},
        {"constant-B", PresetKind::constant_b},
        {"normal-dipole", PresetKind::normal_dipole},
        {"skew-dipole", PresetKind::skew_dipole},
        {"normal-quad+dipole", PresetKind::normal_quad_dipole},
        {"quad-45+dipole", PresetKind::quad45_dipole},
        {"longitudinal-E", PresetKind::longitudinal_e},
        {"rf-cavity", PresetKind::rf_cavity},
    };
    return names;
}

inline PresetKind preset_kind(const std::string& name)
{
    for (const auto& [n, k] : preset_names())
        if (n == name) return k;
    throw DomainError("unknown field preset '" + name + "'");
}

inline std::string preset_name(PresetKind kind)
{
    for (const auto& [n, k] : preset_names())
        if (k == kind) return n;
    return "unknown";
}

// Accelerator presets. The beam travels along x^2; x^1 is the bending plane
// coordinate and x^3 the other transverse one.
inline FaradayField make_preset(PresetKind kind, const Params& p = {})
{
    using detail::antisym;
    const std::string name = preset_name(kind);
    switch (kind) {
    case PresetKind::zero:
        return constant_field(name, Mat4::Zero());
    case PresetKind::constant_e: {
        Mat4 f = antisym(0, 1, param_or(p, "E1", 0.0)) + antisym(0, 2, param_or(p, "E2", 0.0)) +
                 antisym(0, 3, param_or(p, "E3", 0.0));
        return constant_field(name, f);
    }
    case PresetKind::constant_b: {
        Mat4 f = antisym(2, 3, param_or(p, "B1", 0.0)) + antisym(3, 1, param_or(p, "B2", 0.0)) +
                 antisym(1, 2, param_or(p, "B3", 0.0));
        return constant_field(name, f);
    }
    case PresetKind::normal_dipole:
        return constant_field(name, antisym(1, 2, param(p, "b0")));
    case PresetKind::skew_dipole:
        return constant_field(name, antisym(1, 2, -param(p, "b0")));
    case PresetKind::normal_quad_dipole: {
        const double b0 = param(p, "b0"), b1 = param(p, "b1");
        return FaradayField(
            name,
            [b0, b1](const Vec4& x) {
                return (antisym(1, 2, b0 - b1 * x[1]) + antisym(2, 3, b1 * x[3])).eval();
            },
            [b1](const Vec4&) {
                auto g = detail::zero_gradient();
                g[1] = antisym(1, 2, -b1);
                g[3] = antisym(2, 3, b1);
                return g;
            });
    }
    case PresetKind::quad45_dipole: {
        // Rotated quadrupole: B^1 = b1 x^1, B^3 = b0 - b1 x^3, divergence free.
        const double b0 = param(p, "b0"), b1 = param(p, "b1");
        return FaradayField(
            name,
            [b0, b1](const Vec4& x) {
                return (antisym(1, 2, b0 - b1 * x[3]) + antisym(2, 3, b1 * x[1])).eval();
            },
            [b1](const Vec4&) {
                auto g = detail::zero_gradient();
                g[3] = antisym(1, 2, -b1);
                g[1] = antisym(2, 3, b1);
                return g;
            });
    }
    case PresetKind::longitudinal_e:
        return constant_field(name, antisym(0, 2, param(p, "E2")));
    case PresetKind::rf_cavity: {
        const double e0 = param(p, "E2_0"), w = param(p, "w_rf");
        return FaradayField(
            name, [e0, w](const Vec4& x) { return antisym(0, 2, e0 * std::sin(w * x[2])); },
            [e0, w](const Vec4& x) {
                auto g = detail::zero_gradient();
                g[2] = antisym(0, 2, e0 * w * std::cos(w * x[2]));
                return g;
            });
    }
    }
    throw DomainError("unhandled preset");
}

inline FaradayField make_preset(const std::string& name, const Params& p = {})
{
    return make_preset(preset_kind(name), p);
}

// Largest |d_i F_jk + d_j F_ki + d_k F_ij| over index triples, with the
// derivatives taken by central differences of the evaluator itself.
inline double check_closed(const FaradayField& field, const Vec4& x, double h)
{
    if (!(h > 0.0)) throw DomainError("check_closed: step must be positive");
    std::array<Mat4, 4> d;
    for (int l = 0; l < 4; ++l) {
        const Vec4 dx = h * unit(l);
        d[l] = (field.eval(x + dx) - field.eval(x - dx)) / (2.0 * h);
    }
    double worst = 0.0;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            for (int k = 0; k < 4; ++k) {
                const double s = d[i](j, k) + d[j](k, i) + d[k](i, j);
                worst = std::max(worst, std::abs(s));
            }
    return worst;
}

struct Potential {
    std::function<Vec4(const Vec4&)> A;          // covector A_i
    std::function<Mat4(const Vec4&)> jacobian;   // optional: J(l, i) = d_l A_i
};

inline FaradayField from_potential(Potential pot, double h = 1e-4, std::string name = "from-potential")
{
    if (!(h > 0.0)) throw DomainError("from_potential: step must be positive");
    auto jac = [pot, h](const Vec4& x) -> Mat4 {
        if (pot.jacobian) return pot.jacobian(x);
        Mat4 J;
        for (int l = 0; l < 4; ++l) {
            const Vec4 dx = h * unit(l);
            J.row(l) = ((pot.A(x + dx) - pot.A(x - dx)) / (2.0 * h)).transpose();
        }
        return J;
    };
    return FaradayField(
        std::move(name),
        [jac](const Vec4& x) {
            const Mat4 J = jac(x);
            return (J - J.transpose()).eval();
        },
        {}, h);
}

inline double field_norm(const FaradayField& field, const Vec4& x, const ObserverMetric& bar,
                         const Metric& metric = Metric::minkowski())
{
    return op_norm(field.mixed(x, metric), bar);
}

} // namespace lorentzavg

#pragma once

#include "distribution.hpp"
#include "errors.hpp"
#include "fields.hpp"
#include "geometry.hpp"
#include "tensor.hpp"

#include <cmath>
#include <functional>
#include <string>

namespace lorentzavg {

// Charge convention. Particles obey dy/dtau = q F.y. Auto-parallels of a
// connection satisfy x'' = -Gamma(x')(x', x'), so every connection is assembled
// from the effective tensor  -q F^i_j.
inline Mat4 effective_force(const FaradayField& field, const Vec4& x, const Metric& metric, double charge)
{
    return -charge * field.mixed(x, metric);
}

// ------------------------------------------------------------ raw tables

inline Coeffs lorentz_l(const Mat4& F, const Metric& g, const Vec4& y)
{
    const double yy = g.square(y);
    if (!(yy > 0.0)) throw DomainError("Lorentz connection needs a timelike direction");
    const Vec4 yl = g.lower(y);
    const double s = 0.5 / std::sqrt(yy);
    Coeffs c;
    for (int i = 0; i < 4; ++i) {
        const Eigen::RowVector4d Fi = F.row(i);
        c.c[i] = s * (Fi.transpose() * yl.transpose() + yl * Fi);
    }
    return c;
}

inline Coeffs lorentz_t(const Mat4& F, const Metric& g, const Vec4& y)
{
    const double yy = g.square(y);
    if (!(yy > 0.0)) throw DomainError("Lorentz connection needs a timelike direction");
    const Vec4 yl = g.lower(y);
    const Vec4 Fy = F * y;
    const Mat4 proj = g.components() - yl * yl.transpose() / yy;
    const double s = 0.5 / std::sqrt(yy);
    Coeffs c;
    for (int i = 0; i < 4; ++i) c.c[i] = s * Fy[i] * proj;
    return c;
}

// Lowered third moment for one upper index: eta_js eta_kl <y^m y^s y^l>.
inline Mat4 lower_pair(const Mat4& t, const Metric& g)
{
    return g.components() * t * g.components();
}

inline Coeffs averaged_table(const Mat4& F, const Metric& g, const MomentSet& m)
{
    const Vec4 mu_l = g.lower(m.mean);
    const Vec4 Fmu = F * m.mean;
    const Rank3 third = m.third();
    std::array<Mat4, 4> low;
    for (int k = 0; k < 4; ++k) low[k] = lower_pair(third.c[k], g);
    Coeffs c;
    for (int i = 0; i < 4; ++i) {
        const Eigen::RowVector4d Fi = F.row(i);
        Mat4 t = 0.5 * (Fi.transpose() * mu_l.transpose() + mu_l * Fi) + 0.5 * Fmu[i] * g.components();
        for (int k = 0; k < 4; ++k) t -= 0.5 * F(i, k) * low[k];
        c.c[i] = 0.5 * (t + t.transpose());
    }
    return c;
}

// <Gamma>(v, v) assembled from central moments, which keeps the large mean
// parts from cancelling numerically against each other.
inline Vec4 averaged_spray(const Mat4& F, const Metric& g, const MomentSet& m, const Vec4& v)
{
    const Vec4 vl = g.lower(v);
    const double mv = m.mean.dot(vl);
    const double vv = v.dot(vl);
    const Vec4 c2v = m.central2 * vl;
    const double c2vv = vl.dot(c2v);
    Vec4 c3vv;
    for (int k = 0; k < 4; ++k) c3vv[k] = vl.dot(m.central3.c[k] * vl);
    const Vec4 bracket = m.mean * (vv - mv * mv - c2vv) - 2.0 * mv * c2v - c3vv;
    return (F * v) * mv + 0.5 * (F * bracket);
}

// ------------------------------------------------------------ coefficient types

struct ConnectionCoeffs {
    enum class Kind { lorentz, tilde, berwald_generic };

    Kind kind = Kind::berwald_generic;
    std::function<Coeffs(const Vec4& x, const Vec4& y)> table;
    std::function<Vec4(const Vec4& x, const Vec4& y)> spray_fn; // optional closed form of table(x,y)(y,y)

    Coeffs at(const Vec4& x, const Vec4& y) const { return table(x, y); }
    Vec4 spray(const Vec4& x, const Vec4& y) const { return spray_fn ? spray_fn(x, y) : table(x, y).contract(y, y); }
    QuadraticForm quadratic() const
    {
        return [self = *this](const Vec4& x, const Vec4& X) { return self.spray(x, X); };
    }
};

struct AffineCoeffs {
    enum class Kind { averaged_lorentz, levi_civita, custom };

    Kind kind = Kind::custom;
    std::function<Coeffs(const Vec4& x)> table;
    std::function<Vec4(const Vec4& x, const Vec4& v)> spray_fn;

    static AffineCoeffs levi_civita()
    {
        return {Kind::levi_civita, [](const Vec4&) { return Coeffs::zero(); }, {}};
    }
    static AffineCoeffs constant(const Coeffs& c)
    {
        return {Kind::custom, [c](const Vec4&) { return c; }, {}};
    }

    Coeffs at(const Vec4& x) const { return table(x); }
    Vec4 spray(const Vec4& x, const Vec4& v) const { return spray_fn ? spray_fn(x, v) : table(x).contract(v, v); }
    QuadraticForm quadratic() const
    {
        return [self = *this](const Vec4& x, const Vec4& X) { return self.spray(x, X); };
    }
};

class LorentzConnection {
public:
    LorentzConnection(FaradayField field, Metric metric = Metric::minkowski(), double charge = 1.0)
        : field_(std::move(field)), metric_(std::move(metric)), charge_(charge)
    {
    }

    Mat4 force(const Vec4& x) const { return effective_force(field_, x, metric_, charge_); }
    Coeffs l_part(const Vec4& x, const Vec4& y) const { return lorentz_l(force(x), metric_, y); }
    Coeffs t_part(const Vec4& x, const Vec4& y) const { return lorentz_t(force(x), metric_, y); }
    Coeffs table(const Vec4& x, const Vec4& y) const
    {
        const Mat4 F = force(x);
        return lorentz_l(F, metric_, y) + lorentz_t(F, metric_, y);
    }
    // G^i = sqrt(eta(y,y)) F^i_j y^j
    Vec4 spray(const Vec4& x, const Vec4& y) const
    {
        const double yy = metric_.square(y);
        if (!(yy > 0.0)) throw DomainError("Lorentz spray needs a timelike direction");
        return std::sqrt(yy) * (force(x) * y);
    }

    const FaradayField& field() const { return field_; }
    const Metric& metric() const { return metric_; }
    double charge() const { return charge_; }

    ConnectionCoeffs coeffs() const
    {
        auto self = *this;
        return {ConnectionCoeffs::Kind::lorentz,
                [self](const Vec4& x, const Vec4& y) { return self.table(x, y); },
                [self](const Vec4& x, const Vec4& y) { return self.spray(x, y); }};
    }

private:
    FaradayField field_;
    Metric metric_;
    double charge_;
};

inline LorentzConnection lorentz_coeffs(const FaradayField& field, const Metric& metric = Metric::minkowski(),
                                        double charge = 1.0)
{
    return LorentzConnection(field, metric, charge);
}

inline ConnectionCoeffs tilde_coeffs(const FaradayField& field, const Metric& metric = Metric::minkowski(),
                                     double charge = 1.0)
{
    LorentzConnection lc(field, metric, charge);
    return {ConnectionCoeffs::Kind::tilde, [lc](const Vec4& x, const Vec4& y) { return lc.l_part(x, y); },
            [lc](const Vec4& x, const Vec4& y) { return lc.spray(x, y); }};
}

class AveragedLorentz {
public:
    AveragedLorentz(FaradayField field, MomentSet moments, Metric metric = Metric::minkowski(), double charge = 1.0)
        : field_(std::move(field)), moments_(std::move(moments)), metric_(std::move(metric)), charge_(charge)
    {
    }

    Mat4 force(const Vec4& x) const { return effective_force(field_, x, metric_, charge_); }
    Coeffs table(const Vec4& x) const { return averaged_table(force(x), metric_, moments_); }
    Vec4 spray(const Vec4& x, const Vec4& v) const { return averaged_spray(force(x), metric_, moments_, v); }
    const MomentSet& moments() const { return moments_; }

    AffineCoeffs coeffs() const
    {
        auto self = *this;
        return {AffineCoeffs::Kind::averaged_lorentz, [self](const Vec4& x) { return self.table(x); },
                [self](const Vec4& x, const Vec4& v) { return self.spray(x, v); }};
    }

private:
    FaradayField field_;
    MomentSet moments_;
    Metric metric_;
    double charge_;
};

inline AveragedLorentz averaged_lorentz_coeffs(const FaradayField& field, const MomentSet& m,
                                               const Metric& metric = Metric::minkowski(), double charge = 1.0)
{
    return AveragedLorentz(field, m, metric, charge);
}

// Fiber average of a velocity-dependent table over the ensemble velocities.
inline AffineCoeffs average_numeric(const ConnectionCoeffs& coeffs, const Ensemble& ens)
{
    if (ens.empty()) throw DomainError("average_numeric: empty ensemble");
    std::vector<Vec4> ys;
    std::vector<double> ws;
    for (const auto& s : ens.samples) {
        ys.push_back(s.y);
        ws.push_back(s.w);
    }
    return {AffineCoeffs::Kind::custom, [coeffs, ys, ws](const Vec4& x) {
                Coeffs sum;
                double W = 0.0;
                for (std::size_t a = 0; a < ys.size(); ++a) {
                    sum += ws[a] * coeffs.at(x, ys[a]);
                    W += ws[a];
                }
                return sum * (1.0 / W);
            },
            {}};
}

using SprayField = std::function<Vec4(const Vec4& x, const Vec4& y)>;

// Half the velocity Hessian of a spray by central differences.
inline ConnectionCoeffs berwald_from_spray(SprayField spray, double h = 1e-4)
{
    if (!(h > 0.0)) throw DomainError("berwald_from_spray: step must be positive");
    auto table = [spray, h](const Vec4& x, const Vec4& y) {
        Coeffs c;
        const double inv = 1.0 / (8.0 * h * h);
        for (int j = 0; j < 4; ++j)
            for (int k = j; k < 4; ++k) {
                const Vec4 ej = h * unit(j), ek = h * unit(k);
                const Vec4 d2 = spray(x, y + ej + ek) - spray(x, y + ej - ek) - spray(x, y - ej + ek) +
                                spray(x, y - ej - ek);
                for (int i = 0; i < 4; ++i) {
                    c.c[i](j, k) = d2[i] * inv;
                    c.c[i](k, j) = d2[i] * inv;
                }
            }
        return c;
    };
    return {ConnectionCoeffs::Kind::berwald_generic, table, {}};
}

inline Coeffs torsion(const Coeffs& c)
{
    Coeffs t;
    for (int i = 0; i < 4; ++i) t.c[i] = c.c[i] - c.c[i].transpose();
    return t;
}

inline Coeffs torsion(const ConnectionCoeffs& c, const Vec4& x, const Vec4& y) { return torsion(c.at(x, y)); }
inline Coeffs torsion(const AffineCoeffs& c, const Vec4& x) { return torsion(c.at(x)); }

// d_l Gamma^i_jk by central differences, one table per l.
inline std::array<Coeffs, 4> coeff_gradient(const AffineCoeffs& c, const Vec4& x, double h)
{
    std::array<Coeffs, 4> d;
    for (int l = 0; l < 4; ++l) {
        const Vec4 dx = h * unit(l);
        d[l] = (c.at(x + dx) - c.at(x - dx)) * (0.5 / h);
    }
    return d;
}

// R^i_jkm = d_m G^i_jk - d_k G^i_jm + G^r_jk G^i_rm - G^r_jm G^i_rk
inline Curvature curvature(const AffineCoeffs& c, const Vec4& x, double h = 1e-4)
{
    if (!(h > 0.0)) throw DomainError("curvature: step must be positive");
    const Coeffs G = c.at(x);
    const auto dG = coeff_gradient(c, x, h);
    Curvature R;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            for (int k = 0; k < 4; ++k)
                for (int m = 0; m < 4; ++m) {
                    double v = dG[m](i, j, k) - dG[k](i, j, m);
                    for (int r = 0; r < 4; ++r) v += G(r, j, k) * G(i, r, m) - G(r, j, m) * G(i, r, k);
                    R(i, j, k, m) = v;
                }
    return R;
}

struct DifferenceTerms {
    Vec4 exact = Vec4::Zero();
    Vec4 leading = Vec4::Zero();
    Vec4 o2 = Vec4::Zero();
    Vec4 o3 = Vec4::Zero();
};

// Lorentz spray minus averaged spray at a support velocity, together with its
// split into the part quadratic in delta = <y> - y and the higher corrections.
// The third-order term uses deviations measured from the mean, y_hat - <y>.
inline DifferenceTerms difference(const FaradayField& field, const MomentSet& m, const Vec4& x, const Vec4& y,
                                  const Metric& metric = Metric::minkowski(), double charge = 1.0,
                                  double tol = 1e-8)
{
    if (std::abs(metric.square(y) - 1.0) > tol) throw DomainError("difference: y is off the unit hyperboloid");
    const Mat4 F = effective_force(field, x, metric, charge);
    DifferenceTerms d;
    d.exact = (lorentz_l(F, metric, y) + lorentz_t(F, metric, y) - averaged_table(F, metric, m)).contract(y, y);

    const Vec4 yl = metric.lower(y);
    const Vec4 delta = m.mean - y;
    const double dy = delta.dot(yl);
    const double my = m.mean.dot(yl);
    const Vec4 c2y = m.central2 * yl;
    Vec4 c3yy;
    for (int k = 0; k < 4; ++k) c3yy[k] = yl.dot(m.central3.c[k] * yl);

    d.leading = (F * delta) * dy;
    d.o2 = 0.5 * (F * m.mean) * (dy * dy + yl.dot(c2y)) + my * (F * c2y);
    d.o3 = 0.5 * (F * c3yy);
    return d;
}

} // namespace lorentzavg

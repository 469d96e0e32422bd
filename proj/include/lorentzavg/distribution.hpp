#pragma once

#include "errors.hpp"
#include "geometry.hpp"
#include "tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace lorentzavg {

struct PhaseSample {
    Vec4 x = Vec4::Zero();
    Vec4 y = Vec4(1.0, 0.0, 0.0, 0.0);
    double w = 1.0;
};

struct Ensemble {
    std::vector<PhaseSample> samples;
    Observer observer = Observer::lab();
    std::string generator = "custom";
    std::map<std::string, double> params; // generation parameters and analytic alpha / energy

    std::size_t size() const { return samples.size(); }
    bool empty() const { return samples.empty(); }
};

// Moments are stored as the mean plus central second and third moments. The
// raw tensors are reassembled on request; keeping deviations separate avoids
// losing the small spread against the large mean at high energy.
struct MomentSet {
    double vol = 0.0;
    Vec4 mean = Vec4::Zero();
    Mat4 central2 = Mat4::Zero();
    Rank3 central3;

    static MomentSet delta(const Vec4& y, double weight = 1.0)
    {
        MomentSet m;
        m.vol = weight;
        m.mean = y;
        return m;
    }

    Mat4 second() const { return central2 + mean * mean.transpose(); }

    Rank3 third() const
    {
        Rank3 t = central3;
        for (int a = 0; a < 4; ++a)
            t.c[a] += mean[a] * central2 + mean[a] * mean * mean.transpose();
        for (int a = 0; a < 4; ++a)
            for (int b = 0; b < 4; ++b)
                for (int c = 0; c < 4; ++c)
                    t.c[a](b, c) += mean[b] * central2(a, c) + mean[c] * central2(a, b);
        return t;
    }
};

inline Vec4 lift(const Eigen::Vector3d& v)
{
    return Vec4(std::sqrt(1.0 + v.squaredNorm()), v[0], v[1], v[2]);
}

inline Vec4 lift(const Eigen::Vector3d& v, const Metric& metric)
{
    if (!metric.flat()) throw DomainError("lift is only available for the flat metric");
    return lift(v);
}

// Weighted moments of an arbitrary velocity collection, in index order.
template <class VelocityAt, class WeightAt>
MomentSet moments_of(std::size_t n, VelocityAt&& y_at, WeightAt&& w_at)
{
    if (n == 0) throw DomainError("moments of an empty ensemble");
    MomentSet m;
    Vec4 sum = Vec4::Zero();
    for (std::size_t a = 0; a < n; ++a) {
        const double w = w_at(a);
        m.vol += w;
        sum += w * y_at(a);
    }
    if (!(m.vol > 0.0)) throw DomainError("moments need positive total weight");
    m.mean = sum / m.vol;
    for (std::size_t a = 0; a < n; ++a) {
        const double w = w_at(a);
        const Vec4 d = y_at(a) - m.mean;
        const Mat4 dd = w * d * d.transpose();
        m.central2 += dd;
        for (int k = 0; k < 4; ++k) m.central3.c[k] += d[k] * dd;
    }
    m.central2 /= m.vol;
    m.central3 *= 1.0 / m.vol;
    return m;
}

inline MomentSet moments(const Ensemble& ens)
{
    return moments_of(
        ens.size(), [&](std::size_t a) -> const Vec4& { return ens.samples[a].y; },
        [&](std::size_t a) { return ens.samples[a].w; });
}

inline double diameter_alpha_bruteforce(const Ensemble& ens, const ObserverMetric& bar)
{
    double best = 0.0;
    std::vector<Vec4> z;
    z.reserve(ens.size());
    for (const auto& s : ens.samples) z.push_back(bar.euclidean(s.y));
    for (std::size_t a = 0; a < z.size(); ++a)
        for (std::size_t b = a + 1; b < z.size(); ++b) best = std::max(best, (z[a] - z[b]).squaredNorm());
    return std::sqrt(best);
}

// Exact diameter with pruning: any pair longer than a known chord d0 must have
// both ends at least d0 - r_max away from the centroid.
inline double diameter_alpha(const Ensemble& ens, const ObserverMetric& bar)
{
    const std::size_t n = ens.size();
    if (n < 2) return 0.0;
    std::vector<Vec4> z;
    z.reserve(n);
    Vec4 c = Vec4::Zero();
    for (const auto& s : ens.samples) {
        z.push_back(bar.euclidean(s.y));
        c += z.back();
    }
    c /= static_cast<double>(n);

    std::vector<double> r(n);
    std::size_t far = 0;
    for (std::size_t a = 0; a < n; ++a) {
        r[a] = (z[a] - c).norm();
        if (r[a] > r[far]) far = a;
    }
    const double r_max = r[far];

    double d0 = 0.0;
    for (std::size_t b = 0; b < n; ++b) d0 = std::max(d0, (z[far] - z[b]).norm());
    for (int axis = 0; axis < 4; ++axis) {
        auto [lo, hi] = std::minmax_element(z.begin(), z.end(),
                                            [axis](const Vec4& p, const Vec4& q) { return p[axis] < q[axis]; });
        d0 = std::max(d0, (*hi - *lo).norm());
    }

    std::vector<std::size_t> cand;
    const double cut = d0 - r_max;
    for (std::size_t a = 0; a < n; ++a)
        if (r[a] >= cut) cand.push_back(a);

    double best2 = d0 * d0;
    for (std::size_t i = 0; i < cand.size(); ++i)
        for (std::size_t j = i + 1; j < cand.size(); ++j)
            best2 = std::max(best2, (z[cand[i]] - z[cand[j]]).squaredNorm());
    return std::sqrt(best2);
}

inline double energy(const Ensemble& ens, const Metric& metric = Metric::minkowski())
{
    if (ens.empty()) throw DomainError("energy of an empty ensemble");
    double e = std::numeric_limits<double>::infinity();
    for (const auto& s : ens.samples) e = std::min(e, metric.dot(s.y, ens.observer.U));
    return e;
}

inline std::vector<Vec4> deltas(const Ensemble& ens, const MomentSet& m)
{
    std::vector<Vec4> d;
    d.reserve(ens.size());
    for (const auto& s : ens.samples) d.push_back(m.mean - s.y);
    return d;
}

inline std::vector<Vec4> deltas(const Ensemble& ens) { return deltas(ens, moments(ens)); }

// ---------------------------------------------------------------- generators

// Portable uniform and normal variates on top of mt19937_64, whose output
// sequence is fixed by the standard (the library distributions are not).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal()
    {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double rad = std::sqrt(-2.0 * std::log(u1));
        spare_ = rad * std::sin(2.0 * std::numbers::pi * u2);
        has_spare_ = true;
        return rad * std::cos(2.0 * std::numbers::pi * u2);
    }

    Eigen::Vector3d in_unit_ball()
    {
        for (;;) {
            Eigen::Vector3d v(uniform(-1, 1), uniform(-1, 1), uniform(-1, 1));
            if (v.squaredNorm() <= 1.0) return v;
        }
    }

private:
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

inline Vec4 boost(const Vec4& y, double rapidity, int axis)
{
    const double ch = std::cosh(rapidity), sh = std::sinh(rapidity);
    Vec4 r = y;
    r[0] = ch * y[0] + sh * y[axis];
    r[axis] = sh * y[0] + ch * y[axis];
    return r;
}

inline Vec4 from_rapidity(const Eigen::Vector3d& w)
{
    const double r = w.norm();
    if (r == 0.0) return Vec4(1.0, 0.0, 0.0, 0.0);
    const Eigen::Vector3d n = w / r;
    const double sh = std::sinh(r);
    return Vec4(std::cosh(r), sh * n[0], sh * n[1], sh * n[2]);
}

struct SpatialLayout {
    enum class Kind { point, gaussian, lattice } kind = Kind::point;
    double spread = 0.0;  // gaussian standard deviation per axis
    double spacing = 1.0; // lattice spacing
    int sites = 1;        // lattice sites per axis; each velocity is replicated on every site
};

namespace detail {

inline Ensemble place(const std::vector<Vec4>& velocities, const SpatialLayout& layout, Rng& rng)
{
    Ensemble ens;
    switch (layout.kind) {
    case SpatialLayout::Kind::point:
        for (const auto& y : velocities) ens.samples.push_back({Vec4::Zero(), y, 1.0});
        break;
    case SpatialLayout::Kind::gaussian:
        for (const auto& y : velocities) {
            Vec4 x(0.0, layout.spread * rng.normal(), layout.spread * rng.normal(),
                   layout.spread * rng.normal());
            ens.samples.push_back({x, y, 1.0});
        }
        break;
    case SpatialLayout::Kind::lattice: {
        const int n = layout.sites;
        const double off = 0.5 * (n - 1);
        ens.samples.reserve(velocities.size() * static_cast<std::size_t>(n * n * n));
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < n; ++k) {
                    Vec4 x(0.0, (i - off) * layout.spacing, (j - off) * layout.spacing,
                           (k - off) * layout.spacing);
                    for (const auto& y : velocities) ens.samples.push_back({x, y, 1.0});
                }
        break;
    }
    }
    return ens;
}

} // namespace detail

inline Ensemble delta_ensemble(const Vec4& y0, const Vec4& x0 = Vec4::Zero())
{
    Ensemble ens;
    ens.samples.push_back({x0, y0, 1.0});
    ens.generator = "delta";
    ens.params = {{"alpha", 0.0}, {"energy", y0[0]}};
    return ens;
}

inline Ensemble delta_ensemble(const Vec4& y0, const SpatialLayout& layout)
{
    Rng rng(0);
    Ensemble ens = detail::place({y0}, layout, rng);
    ens.generator = "delta";
    ens.params = {{"alpha", 0.0}, {"energy", y0[0]}};
    return ens;
}

// Uniform in a rapidity ball of radius r_cap around the rest frame, boosted by
// r0 along the beam axis.
inline Ensemble rapidity_cap(double r0, double r_cap, std::size_t n, std::uint64_t seed, int axis = 2,
                             const SpatialLayout& layout = {})
{
    if (n == 0 || r_cap < 0.0) throw DomainError("rapidity_cap: need n > 0 and r_cap >= 0");
    Rng rng(seed);
    std::vector<Vec4> ys;
    ys.reserve(n);
    for (std::size_t a = 0; a < n; ++a) ys.push_back(boost(from_rapidity(r_cap * rng.in_unit_ball()), r0, axis));
    Ensemble ens = detail::place(ys, layout, rng);
    ens.generator = "rapidity-cap";
    ens.params = {{"r0", r0},
                  {"r_cap", r_cap},
                  {"n", static_cast<double>(n)},
                  {"alpha", 2.0 * std::sinh(r_cap) * std::sqrt(std::cosh(2.0 * r0))},
                  {"energy", std::cosh(std::max(0.0, std::abs(r0) - r_cap))}};
    return ens;
}

inline Ensemble rapidity_gaussian(double r0, double sigma, double cutoff, std::size_t n, std::uint64_t seed,
                                  int axis = 2, const SpatialLayout& layout = {})
{
    if (n == 0 || sigma <= 0.0 || cutoff <= 0.0) throw DomainError("rapidity_gaussian: bad parameters");
    Rng rng(seed);
    std::vector<Vec4> ys;
    ys.reserve(n);
    const double rmax = cutoff * sigma;
    while (ys.size() < n) {
        Eigen::Vector3d w(sigma * rng.normal(), sigma * rng.normal(), sigma * rng.normal());
        if (w.norm() <= rmax) ys.push_back(boost(from_rapidity(w), r0, axis));
    }
    Ensemble ens = detail::place(ys, layout, rng);
    ens.generator = "rapidity-gaussian";
    ens.params = {{"r0", r0},
                  {"sigma", sigma},
                  {"cutoff", cutoff},
                  {"n", static_cast<double>(n)},
                  {"alpha", 2.0 * std::sinh(rmax) * std::sqrt(std::cosh(2.0 * r0))},
                  {"energy", std::cosh(std::max(0.0, std::abs(r0) - rmax))}};
    return ens;
}

// Lab-frame beam: spatial momenta uniform in a ball of radius rho around
// p_par along the beam axis. rho and p_par are chosen so that the support has
// minimum y^0 equal to `energy` and chord diameter equal to `alpha`.
struct BeamShape {
    double p_par = 0.0;
    double rho = 0.0;
    int axis = 2;

    Vec4 support_point(const Eigen::Vector3d& direction, double fraction) const
    {
        Eigen::Vector3d p = Eigen::Vector3d::Zero();
        p[axis - 1] = p_par;
        return lift(p + fraction * rho * direction.normalized());
    }
};

inline double beam_diameter(double energy, double rho)
{
    const double back = std::sqrt(energy * energy - 1.0);
    const double front = back + 2.0 * rho;
    const double dg = std::sqrt(1.0 + front * front) - energy;
    return std::sqrt(4.0 * rho * rho + dg * dg);
}

inline BeamShape beam_shape(double energy, double alpha, int axis = 2)
{
    if (!(energy > 1.0) || !(alpha > 0.0)) throw DomainError("beam_shape: need energy > 1 and alpha > 0");
    double lo = 0.0, hi = alpha;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (beam_diameter(energy, mid) < alpha ? lo : hi) = mid;
    }
    const double rho = 0.5 * (lo + hi);
    return {std::sqrt(energy * energy - 1.0) + rho, rho, axis};
}

inline Ensemble momentum_ball(double energy, double alpha, std::size_t n, std::uint64_t seed, int axis = 2,
                              const SpatialLayout& layout = {})
{
    if (n == 0) throw DomainError("momentum_ball: need n > 0");
    const BeamShape shape = beam_shape(energy, alpha, axis);
    Rng rng(seed);
    std::vector<Vec4> ys;
    ys.reserve(n);
    Eigen::Vector3d centre = Eigen::Vector3d::Zero();
    centre[axis - 1] = shape.p_par;
    for (std::size_t a = 0; a < n; ++a) ys.push_back(lift(centre + shape.rho * rng.in_unit_ball()));
    Ensemble ens = detail::place(ys, layout, rng);
    ens.generator = "momentum-ball";
    ens.params = {{"p_par", shape.p_par},
                  {"rho", shape.rho},
                  {"n", static_cast<double>(n)},
                  {"alpha", alpha},
                  {"energy", energy}};
    return ens;
}

} // namespace lorentzavg

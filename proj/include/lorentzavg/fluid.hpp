#pragma once

#include "connections.hpp"
#include "distribution.hpp"
#include "dynamics.hpp"
#include "errors.hpp"
#include "fields.hpp"
#include "geometry.hpp"

#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace lorentzavg {

// ------------------------------------------------------------ spatial binning

// Cube of cells x cells x cells around a spatial centre. Cells are half-open,
// so a lattice whose spacing divides the width puts the same number of copies
// of every velocity in each interior cell.
struct TubeGrid {
    Eigen::Vector3d centre = Eigen::Vector3d::Zero();
    double width = 1.0;
    int cells = 5;

    int count() const { return cells * cells * cells; }
    int index(int i, int j, int k) const { return (i * cells + j) * cells + k; }
    std::array<int, 3> coords(int idx) const { return {idx / (cells * cells), (idx / cells) % cells, idx % cells}; }
    int middle() const { return cells / 2; }

    std::optional<int> locate(const Vec4& x) const
    {
        std::array<int, 3> c{};
        for (int a = 0; a < 3; ++a) {
            const double u = (x[a + 1] - centre[a]) / width + 0.5 * cells;
            const double f = std::floor(u);
            if (!(f >= 0.0) || f >= cells) return std::nullopt;
            c[a] = static_cast<int>(f);
        }
        return index(c[0], c[1], c[2]);
    }

    Eigen::Vector3d cell_centre(int idx) const
    {
        const auto c = coords(idx);
        Eigen::Vector3d p;
        for (int a = 0; a < 3; ++a) p[a] = centre[a] + (c[a] + 0.5 - 0.5 * cells) * width;
        return p;
    }
};

inline Eigen::Vector3d spatial_centroid(const Ensemble& ens)
{
    if (ens.empty()) throw DomainError("spatial_centroid: empty ensemble");
    Eigen::Vector3d s = Eigen::Vector3d::Zero();
    double W = 0.0;
    for (const auto& p : ens.samples) {
        s += p.w * p.x.tail<3>();
        W += p.w;
    }
    return s / W;
}

inline TubeGrid tube_around(const Ensemble& ens, double width, int cells = 5)
{
    if (!(width > 0.0) || cells < 1) throw DomainError("tube_around: need width > 0 and cells >= 1");
    return {spatial_centroid(ens), width, cells};
}

// Width proportional to the largest per-axis positional standard deviation.
inline TubeGrid tube_from_spread(const Ensemble& ens, int cells = 5, double factor = 4.0)
{
    const Eigen::Vector3d c = spatial_centroid(ens);
    Eigen::Vector3d var = Eigen::Vector3d::Zero();
    double W = 0.0;
    for (const auto& p : ens.samples) {
        const Eigen::Vector3d d = p.x.tail<3>() - c;
        var += p.w * d.cwiseProduct(d);
        W += p.w;
    }
    const double spread = std::sqrt(var.maxCoeff() / W);
    if (!(spread > 0.0)) throw DomainError("tube_from_spread: ensemble has no positional spread");
    return {c, factor * spread, cells};
}

// ------------------------------------------------------------ mean field

struct FluidCell {
    bool occupied = false;
    Vec4 centre = Vec4::Zero();   // geometric cell centre at the slice time
    Vec4 position = Vec4::Zero(); // weighted centroid of the residents
    MomentSet moments;
    std::size_t count = 0;
    double eta_VV = 0.0;

    const Vec4& V() const { return moments.mean; }
    Mat4 T() const { return moments.second(); }
    Rank3 Q() const { return moments.third(); }
    double weight() const { return moments.vol; }
};

struct FluidSlice {
    double t = 0.0;
    TubeGrid grid;
    std::vector<FluidCell> cells;

    const FluidCell& at(int i, int j, int k) const { return cells[grid.index(i, j, k)]; }
};

// Indices of the samples resident in one cell, in ensemble order.
inline std::vector<std::size_t> residents(const Ensemble& ens, const TubeGrid& grid, int cell)
{
    std::vector<std::size_t> out;
    for (std::size_t a = 0; a < ens.size(); ++a)
        if (grid.locate(ens.samples[a].x) == cell) out.push_back(a);
    return out;
}

inline FluidSlice mean_field(const Ensemble& slice, const TubeGrid& grid, const Metric& metric = Metric::minkowski())
{
    FluidSlice out;
    out.t = slice.params.count("t") ? slice.params.at("t") : (slice.empty() ? 0.0 : slice.samples.front().x[0]);
    out.grid = grid;
    out.cells.resize(grid.count());
    std::vector<std::vector<std::size_t>> members(grid.count());
    for (std::size_t a = 0; a < slice.size(); ++a)
        if (auto c = grid.locate(slice.samples[a].x)) members[*c].push_back(a);
    bool any = false;
    for (int c = 0; c < grid.count(); ++c) {
        auto& cell = out.cells[c];
        const Eigen::Vector3d p = grid.cell_centre(c);
        cell.centre = Vec4(out.t, p[0], p[1], p[2]);
        const auto& m = members[c];
        if (m.empty()) continue;
        cell.moments = moments_of(
            m.size(), [&](std::size_t k) -> const Vec4& { return slice.samples[m[k]].y; },
            [&](std::size_t k) { return slice.samples[m[k]].w; });
        Vec4 pos = Vec4::Zero();
        for (std::size_t a : m) pos += slice.samples[a].w * slice.samples[a].x;
        cell.position = pos / cell.moments.vol;
        cell.position[0] = out.t;
        cell.occupied = true;
        cell.count = m.size();
        cell.eta_VV = metric.square(cell.moments.mean);
        any = true;
    }
    if (!any) throw DomainError("mean_field: every cell is empty at t=" + std::to_string(out.t));
    return out;
}

inline std::vector<FluidSlice> mean_field(const EnsembleSlices& slices, const TubeGrid& grid,
                                          const Metric& metric = Metric::minkowski())
{
    std::vector<FluidSlice> out;
    out.reserve(slices.size());
    for (const auto& s : slices) out.push_back(mean_field(s, grid, metric));
    return out;
}

// ------------------------------------------------------------ auto-parallel residual

// A cell of a slice sequence; reach is the stencil half-width in slices and
// cells, so reach 2 gives the doubled-step derivative used for error estimates.
struct StencilPoint {
    std::size_t slice = 0;
    int i = 0, j = 0, k = 0;
    int reach = 1;
};

inline StencilPoint tube_middle(const std::vector<FluidSlice>& slices, int reach = 1)
{
    if (slices.empty()) throw DomainError("tube_middle: no slices");
    const int m = slices.front().grid.middle();
    return {slices.size() / 2, m, m, m, reach};
}

struct FluidResidual {
    Vec4 value = Vec4::Zero();
    double norm = 0.0;
    Vec4 V = Vec4::Zero();
    Mat4 dV = Mat4::Zero(); // dV(k, j) = d_j V^k
    double eta_VV = 0.0;
};

namespace detail {

inline const FluidCell& stencil_cell(const std::vector<FluidSlice>& slices, std::size_t s, int i, int j, int k)
{
    if (s >= slices.size()) throw DomainError("fluid stencil: missing time slice");
    const auto& g = slices[s].grid;
    if (i < 0 || j < 0 || k < 0 || i >= g.cells || j >= g.cells || k >= g.cells)
        throw DomainError("fluid stencil: neighbour cell outside the tube");
    const auto& c = slices[s].at(i, j, k);
    if (!c.occupied) throw DomainError("fluid stencil: neighbour cell is empty");
    return c;
}

// d_j of a cell quantity from the central-difference pairs in lab time and in
// each spatial axis. Every cell value belongs to the weighted centroid of its
// residents, so the gradient solves q(P+) - q(P-) = dq . (P+ - P-) over the
// four pairs; on a regular grid this is the plain central difference.
template <class Quantity>
auto stencil_gradient(const std::vector<FluidSlice>& slices, const StencilPoint& at, Quantity&& q)
{
    const int r = at.reach;
    if (r < 1) throw DomainError("fluid stencil: reach must be at least 1");
    if (at.slice < static_cast<std::size_t>(r)) throw DomainError("fluid stencil: missing time slice");
    using Value = std::decay_t<decltype(q(slices[at.slice].cells[0]))>;
    std::array<Value, 4> diff;
    Mat4 dP;
    auto pair = [&](int d, const FluidCell& plus, const FluidCell& minus) {
        diff[d] = q(plus) - q(minus);
        dP.col(d) = plus.position - minus.position;
    };
    pair(0, stencil_cell(slices, at.slice + r, at.i, at.j, at.k), stencil_cell(slices, at.slice - r, at.i, at.j, at.k));
    const std::array<std::array<int, 3>, 3> axes{{{r, 0, 0}, {0, r, 0}, {0, 0, r}}};
    for (int a = 0; a < 3; ++a) {
        const auto& e = axes[a];
        pair(a + 1, stencil_cell(slices, at.slice, at.i + e[0], at.j + e[1], at.k + e[2]),
             stencil_cell(slices, at.slice, at.i - e[0], at.j - e[1], at.k - e[2]));
    }
    const Eigen::FullPivLU<Mat4> lu(dP);
    if (!lu.isInvertible()) throw NumericError("fluid", "degenerate stencil geometry");
    const Mat4 inv = lu.inverse();
    std::array<Value, 4> d;
    for (int j = 0; j < 4; ++j) {
        d[j] = diff[0] * inv(0, j);
        for (int m = 1; m < 4; ++m) d[j] = d[j] + diff[m] * inv(m, j);
    }
    return d;
}

} // namespace detail

// <nabla>_V V = V^j d_j V + <Gamma>(V, V) at a stencil point.
inline FluidResidual residual(const std::vector<FluidSlice>& slices, const AffineCoeffs& coeffs,
                              const StencilPoint& at, const ObserverMetric& bar = lab_metric(),
                              const Metric& metric = Metric::minkowski())
{
    const auto& cell = detail::stencil_cell(slices, at.slice, at.i, at.j, at.k);
    const auto grad = detail::stencil_gradient(slices, at, [](const FluidCell& c) -> Vec4 { return c.V(); });
    FluidResidual r;
    r.V = cell.V();
    r.eta_VV = metric.square(r.V);
    for (int j = 0; j < 4; ++j) r.dV.col(j) = grad[j];
    r.value = r.dV * r.V + coeffs.spray(cell.position, r.V);
    r.norm = bar.norm(r.value);
    return r;
}

// Same, with the averaged Lorentz connection built from the cell's own moments.
inline FluidResidual residual(const std::vector<FluidSlice>& slices, const FaradayField& field,
                              const StencilPoint& at, const ObserverMetric& bar = lab_metric(),
                              const Metric& metric = Metric::minkowski(), double charge = 1.0)
{
    const auto& cell = detail::stencil_cell(slices, at.slice, at.i, at.j, at.k);
    return residual(slices, averaged_lorentz_coeffs(field, cell.moments, metric, charge).coeffs(), at, bar, metric);
}

enum class NormalizedForm {
    covariant, // exact expansion of <nabla>_u u for u = V / |V|
    printed    // (1/eta(V,V)) <nabla>_V V + (1/2) V(log eta(V,V)) V
};

inline FluidResidual normalized_residual(const std::vector<FluidSlice>& slices, const AffineCoeffs& coeffs,
                                         const StencilPoint& at, const ObserverMetric& bar = lab_metric(),
                                         const Metric& metric = Metric::minkowski(),
                                         NormalizedForm form = NormalizedForm::covariant)
{
    FluidResidual r = residual(slices, coeffs, at, bar, metric);
    if (!(r.eta_VV > 0.0)) throw DomainError("normalized_residual: mean velocity is not timelike");
    const auto dlog = detail::stencil_gradient(
        slices, at, [&](const FluidCell& c) -> double { return std::log(metric.square(c.V())); });
    double v_dlog = 0.0;
    for (int j = 0; j < 4; ++j) v_dlog += r.V[j] * dlog[j];
    if (form == NormalizedForm::covariant)
        r.value = (r.value - 0.5 * v_dlog * r.V) / r.eta_VV;
    else
        r.value = r.value / r.eta_VV + 0.5 * v_dlog * r.V;
    r.norm = bar.norm(r.value);
    return r;
}

inline FluidResidual normalized_residual(const std::vector<FluidSlice>& slices, const FaradayField& field,
                                         const StencilPoint& at, const ObserverMetric& bar = lab_metric(),
                                         const Metric& metric = Metric::minkowski(), double charge = 1.0,
                                         NormalizedForm form = NormalizedForm::covariant)
{
    const auto& cell = detail::stencil_cell(slices, at.slice, at.i, at.j, at.k);
    return normalized_residual(slices, averaged_lorentz_coeffs(field, cell.moments, metric, charge).coeffs(), at,
                               bar, metric, form);
}

// Richardson estimate of the stencil truncation error: for a second-order
// stencil R(h) - R(2h) is three times the error of R(h).
inline double noise_floor(const FluidResidual& fine, const FluidResidual& coarse)
{
    const double rounding = 64.0 * std::numeric_limits<double>::epsilon() *
                            (fine.dV * fine.V).cwiseAbs().maxCoeff();
    return (fine.value - coarse.value).norm() / 3.0 + rounding;
}

// ------------------------------------------------------------ Sobolev norms on velocity space

// Cell-centred samples of a density on a box in the spatial velocity
// components. Outside the box the density is zero or, when periodic, wrapped.
struct DensityGrid {
    Eigen::Vector3d lo = Eigen::Vector3d::Zero();
    double h = 1.0;
    int n = 1;
    bool periodic = false;
    std::vector<double> values;

    std::size_t flat(int i, int j, int k) const
    {
        return (static_cast<std::size_t>(i) * n + static_cast<std::size_t>(j)) * n + static_cast<std::size_t>(k);
    }
    double at(int i, int j, int k) const
    {
        if (periodic) {
            auto wrap = [this](int v) { return ((v % n) + n) % n; };
            return values[flat(wrap(i), wrap(j), wrap(k))];
        }
        if (i < 0 || j < 0 || k < 0 || i >= n || j >= n || k >= n) return 0.0;
        return values[flat(i, j, k)];
    }
    Eigen::Vector3d centre(int i, int j, int k) const { return lo + h * Eigen::Vector3d(i + 0.5, j + 0.5, k + 0.5); }
    double cell_volume() const { return h * h * h; }
};

inline DensityGrid sample_density(const std::function<double(const Eigen::Vector3d&)>& f, const Eigen::Vector3d& lo,
                                  double side, int n, bool periodic = false)
{
    if (n < 1 || !(side > 0.0)) throw DomainError("sample_density: need n >= 1 and side > 0");
    DensityGrid g{lo, side / n, n, periodic, std::vector<double>(static_cast<std::size_t>(n) * n * n)};
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) g.values[g.flat(i, j, k)] = f(g.centre(i, j, k));
    return g;
}

// Weighted histogram of the spatial velocity components on a cube that holds
// the support with one empty bin of margin. The density integrates to the
// total weight.
inline DensityGrid histogram_density(const Ensemble& ens, int bins)
{
    if (ens.empty() || bins < 1) throw DomainError("histogram_density: need samples and bins >= 1");
    Eigen::Vector3d lo = ens.samples.front().y.tail<3>(), hi = lo;
    for (const auto& s : ens.samples) {
        lo = lo.cwiseMin(s.y.tail<3>());
        hi = hi.cwiseMax(s.y.tail<3>());
    }
    const double span = std::max((hi - lo).maxCoeff(), 1e-300);
    const int n = bins + 2;
    const double h = span * (1.0 + 1e-9) / bins;
    const Eigen::Vector3d mid = 0.5 * (lo + hi);
    DensityGrid g{mid - Eigen::Vector3d::Constant(0.5 * n * h), h, n, false,
                  std::vector<double>(static_cast<std::size_t>(n) * n * n, 0.0)};
    for (const auto& s : ens.samples) {
        std::array<int, 3> c{};
        for (int a = 0; a < 3; ++a)
            c[a] = std::clamp(static_cast<int>(std::floor((s.y[a + 1] - g.lo[a]) / h)), 1, n - 2);
        g.values[g.flat(c[0], c[1], c[2])] += s.w;
    }
    for (double& v : g.values) v /= g.cell_volume();
    return g;
}

struct SobolevEstimate {
    int bins = 0;
    double h = 0.0;
    double w11 = 0.0;            // |f|_{1,1}
    std::vector<double> l2;      // |g|_{0,2} of each requested function
    double support_volume = 0.0; // volume of the cells where f > 0
    double mass = 0.0;           // integral of f
};

inline SobolevEstimate sobolev_norms(const DensityGrid& g,
                                     const std::vector<std::function<double(const Eigen::Vector3d&)>>& functions = {})
{
    SobolevEstimate est;
    est.bins = g.n;
    est.h = g.h;
    est.l2.assign(functions.size(), 0.0);
    const double dv = g.cell_volume();
    for (int i = 0; i < g.n; ++i)
        for (int j = 0; j < g.n; ++j)
            for (int k = 0; k < g.n; ++k) {
                const double f = g.at(i, j, k);
                if (f < 0.0) throw DomainError("sobolev_norms: density must be nonnegative");
                const double grad = std::abs(g.at(i + 1, j, k) - g.at(i - 1, j, k)) +
                                    std::abs(g.at(i, j + 1, k) - g.at(i, j - 1, k)) +
                                    std::abs(g.at(i, j, k + 1) - g.at(i, j, k - 1));
                est.w11 += (f + grad / (2.0 * g.h)) * dv;
                est.mass += f * dv;
                if (f > 0.0) est.support_volume += dv;
                for (std::size_t q = 0; q < functions.size(); ++q) {
                    const double v = functions[q](g.centre(i, j, k));
                    est.l2[q] += v * v * dv;
                }
            }
    for (double& v : est.l2) v = std::sqrt(v);
    return est;
}

// ------------------------------------------------------------ bound on the residual

struct BoundRhs {
    double value = 0.0;
    double alpha = 0.0;
    double vol = 0.0;   // integral of f over the support
    double vol_e = 0.0; // Euclidean volume of the support in velocity space
    double f_w11 = 0.0;
    std::array<double, 4> dlog_norm{}; // |d_0 log|delta^k||_{0,2}
    std::size_t excluded = 0;          // (sample, component) pairs dropped for tiny |delta^k|
    int bins = 0;
};

inline int default_bins(std::size_t n)
{
    return std::clamp(static_cast<int>(std::cbrt(static_cast<double>(n) / 8.0)), 2, 32);
}

// (vol_E^1/2 / vol) sum_k |d_0 log|delta^k||_{0,2} |f|_{1,1} alpha^2 for the
// samples resident in one cell, with d_0 V supplied by the time stencil.
// The L2 norm over the support is the support volume times the f-weighted
// mean square over the samples.
inline BoundRhs bound_rhs(const Ensemble& resident, const Vec4& dV_dt, int bins = 0,
                          const ObserverMetric& bar = lab_metric())
{
    BoundRhs b;
    if (resident.empty()) throw DomainError("bound_rhs: no resident samples");
    b.alpha = diameter_alpha(resident, bar);
    if (b.alpha == 0.0) return b;
    b.bins = bins > 0 ? bins : default_bins(resident.size());
    const auto est = sobolev_norms(histogram_density(resident, b.bins));
    b.vol = est.mass;
    b.vol_e = est.support_volume;
    b.f_w11 = est.w11;
    const MomentSet m = moments(resident);
    const double cut = 1e-8 * b.alpha;
    for (int k = 0; k < 4; ++k) {
        double sum = 0.0, W = 0.0;
        for (const auto& s : resident.samples) {
            const double d = m.mean[k] - s.y[k];
            if (std::abs(d) < cut) {
                ++b.excluded;
                continue;
            }
            const double g = dV_dt[k] / d;
            sum += s.w * g * g;
            W += s.w;
        }
        b.dlog_norm[k] = W > 0.0 ? std::sqrt(b.vol_e * sum / W) : 0.0;
    }
    double total = 0.0;
    for (double v : b.dlog_norm) total += v;
    b.value = std::sqrt(b.vol_e) / b.vol * total * b.f_w11 * b.alpha * b.alpha;
    return b;
}

// ------------------------------------------------------------ fluid benchmark

// Every velocity replicated on a cubic lattice whose spacing equals the cell
// width, probed at the middle cell at t0 with slices t0 + k dt, k = -2..2.
struct FluidCheckConfig {
    double dt = 0.01;
    double t0 = 0.02;
    int sites = 7;
    double spacing = 0.05;
    int cells = 5;
    int bins = 0;
    double allowance = 10.0; // budget allowance * alpha^3 for the remainder
    bool averaged_transport = true;
    NormalizedForm form = NormalizedForm::covariant;
    IntegratorConfig integrator;
    unsigned threads = 1;
};

struct FluidProbe {
    double t = 0.0;
    double residual = 0.0;
    double normalized = 0.0;
    double noise_floor = 0.0;
    double normalized_noise_floor = 0.0;
    double bound = 0.0;
    double eta_VV = 0.0;
    BoundRhs bound_detail;
    FluidResidual detail;
};

struct FluidCheckReport {
    double alpha = 0.0;
    double energy = 0.0;
    FluidProbe lorentz;                 // f carried by the Lorentz flow
    std::optional<FluidProbe> averaged; // f~ carried by the averaged flow
    std::vector<FluidSlice> slices;     // Lorentz slices, for output
    bool within_bound = true;
    double allowance = 0.0;
};

namespace detail {

inline FluidProbe probe_slices(const std::vector<FluidSlice>& fs, const EnsembleSlices& raw, const FaradayField& field,
                               const FluidCheckConfig& cfg, const ObserverMetric& bar, const Metric& metric,
                               double charge)
{
    FluidProbe p;
    const StencilPoint fine = tube_middle(fs, 1), coarse = tube_middle(fs, 2);
    p.t = fs[fine.slice].t;
    p.detail = residual(fs, field, fine, bar, metric, charge);
    p.residual = p.detail.norm;
    p.eta_VV = p.detail.eta_VV;
    p.noise_floor = noise_floor(p.detail, residual(fs, field, coarse, bar, metric, charge));
    const auto nf = normalized_residual(fs, field, fine, bar, metric, charge, cfg.form);
    p.normalized = nf.norm;
    p.normalized_noise_floor = noise_floor(nf, normalized_residual(fs, field, coarse, bar, metric, charge, cfg.form));
    const auto& grid = fs[fine.slice].grid;
    const auto idx = residents(raw[fine.slice], grid, grid.index(fine.i, fine.j, fine.k));
    Ensemble cell;
    cell.observer = raw[fine.slice].observer;
    for (std::size_t a : idx) cell.samples.push_back(raw[fine.slice].samples[a]);
    p.bound_detail = bound_rhs(cell, p.detail.dV.col(0), cfg.bins, bar);
    p.bound = p.bound_detail.value;
    return p;
}

} // namespace detail

inline FluidCheckReport fluid_check(const FaradayField& field, const Ensemble& velocities,
                                    const FluidCheckConfig& cfg = {}, const Metric& metric = Metric::minkowski(),
                                    double charge = 1.0)
{
    if (velocities.empty()) throw DomainError("fluid_check: empty ensemble");
    if (!(cfg.dt > 0.0) || cfg.t0 < 2.0 * cfg.dt - 1e-15)
        throw DomainError("fluid_check: need dt > 0 and t0 >= 2 dt");
    if (cfg.sites < cfg.cells + 2) throw DomainError("fluid_check: lattice must extend past the tube");
    std::vector<Vec4> ys;
    for (const auto& s : velocities.samples) ys.push_back(s.y);
    SpatialLayout lattice;
    lattice.kind = SpatialLayout::Kind::lattice;
    lattice.sites = cfg.sites;
    lattice.spacing = cfg.spacing;
    Rng unused(0);
    Ensemble ens = detail::place(ys, lattice, unused);
    ens.observer = velocities.observer;

    const ObserverMetric bar = eta_bar(metric, ens.observer);
    FluidCheckReport rep;
    rep.alpha = diameter_alpha(velocities, bar);
    rep.energy = energy(velocities, metric);
    rep.allowance = cfg.allowance * rep.alpha * rep.alpha * rep.alpha;

    std::vector<double> times;
    for (int k = -2; k <= 2; ++k) times.push_back(cfg.t0 + k * cfg.dt);
    const auto positive_times = [&] {
        std::vector<double> t;
        for (double v : times)
            if (v > 0.0) t.push_back(v);
        return t;
    }();
    auto with_start = [&](EnsembleSlices s) {
        if (positive_times.size() < times.size()) {
            Ensemble e0 = ens;
            e0.params["t"] = 0.0;
            s.insert(s.begin(), std::move(e0));
        }
        return s;
    };

    const EnsembleSlices lor =
        with_start(transport_ensemble(field, ens, positive_times, cfg.integrator, metric, charge, cfg.threads));
    const TubeGrid grid = tube_around(lor[2], cfg.spacing, cfg.cells);
    rep.slices = mean_field(lor, grid, metric);
    rep.lorentz = detail::probe_slices(rep.slices, lor, field, cfg, bar, metric, charge);
    rep.within_bound = rep.lorentz.residual <= rep.lorentz.bound + rep.allowance;

    if (cfg.averaged_transport) {
        const EnsembleSlices avg = with_start(transport_ensemble_averaged(field, ens, positive_times,
                                                                          CoupledTransport::Moments::transported,
                                                                          cfg.integrator, metric, charge, cfg.threads));
        const TubeGrid g2 = tube_around(avg[2], cfg.spacing, cfg.cells);
        rep.averaged = detail::probe_slices(mean_field(avg, g2, metric), avg, field, cfg, bar, metric, charge);
    }
    return rep;
}

} // namespace lorentzavg

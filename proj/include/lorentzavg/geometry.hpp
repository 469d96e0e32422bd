#pragma once

#include "errors.hpp"
#include "tensor.hpp"

#include <algorithm>
#include <functional>
#include <string>
#include <vector>

namespace lorentzavg {

// Constant-component spacetime metric. The Levi-Civita coefficients of a
// constant metric vanish, which is all the shipped code needs.
class Metric {
public:
    Metric() : Metric(minkowski_components(), true) {}

    explicit Metric(const Mat4& g, bool flat = false) : g_(g), flat_(flat)
    {
        if (!g_.isApprox(g_.transpose(), 1e-14)) throw DomainError("metric must be symmetric");
        if (std::abs(g_.determinant()) <= 0.0) throw DomainError("metric is degenerate");
        inv_ = g_.inverse();
    }

    static Metric minkowski() { return {}; }

    const Mat4& components() const { return g_; }
    const Mat4& inverse() const { return inv_; }
    bool flat() const { return flat_; }

    double dot(const Vec4& a, const Vec4& b) const { return a.dot(g_ * b); }
    double square(const Vec4& a) const { return dot(a, a); }
    Vec4 lower(const Vec4& a) const { return g_ * a; }
    // F^i_j = eta^{ik} F_kj
    Mat4 raise_first(const Mat4& lowered) const { return inv_ * lowered; }

private:
    static Mat4 minkowski_components()
    {
        Mat4 g = Mat4::Zero();
        g.diagonal() << 1.0, -1.0, -1.0, -1.0;
        return g;
    }

    Mat4 g_;
    Mat4 inv_;
    bool flat_ = false;
};

struct Observer {
    Vec4 U = Vec4(1.0, 0.0, 0.0, 0.0);
    std::string frame = "lab";

    static Observer lab() { return {}; }
};

// Riemannian metric induced by a unit timelike observer. Keeps the Cholesky
// factor B with B^T B = components so that norms and operator norms reduce
// to Euclidean ones.
class ObserverMetric {
public:
    explicit ObserverMetric(const Mat4& m) : m_(m)
    {
        Eigen::LLT<Mat4> llt(m_);
        if (llt.info() != Eigen::Success) throw DomainError("observer metric is not positive definite");
        B_ = llt.matrixL().transpose();
        Binv_ = B_.inverse();
    }

    static ObserverMetric identity() { return ObserverMetric(Mat4::Identity()); }

    const Mat4& components() const { return m_; }
    const Mat4& factor() const { return B_; }
    const Mat4& factor_inverse() const { return Binv_; }

    double inner(const Vec4& a, const Vec4& b) const { return a.dot(m_ * b); }
    double norm(const Vec4& a) const { return (B_ * a).norm(); }
    Vec4 euclidean(const Vec4& a) const { return B_ * a; }

private:
    Mat4 m_;
    Mat4 B_;
    Mat4 Binv_;
};

inline ObserverMetric eta_bar(const Metric& metric, const Observer& obs, double tol = 1e-10)
{
    const double uu = metric.square(obs.U);
    if (std::abs(uu - 1.0) > tol || obs.U[0] <= 0.0)
        throw DomainError("observer must be a unit future-pointing timelike vector, got eta(U,U)=" +
                          std::to_string(uu));
    const Vec4 Ul = metric.lower(obs.U);
    Mat4 m = -metric.components() + 2.0 * Ul * Ul.transpose();
    return ObserverMetric(0.5 * (m + m.transpose()));
}

inline ObserverMetric lab_metric() { return eta_bar(Metric::minkowski(), Observer::lab()); }

inline double op_norm(const Mat4& A, const ObserverMetric& bar)
{
    const Mat4 M = bar.factor() * A * bar.factor_inverse();
    Eigen::JacobiSVD<Mat4> svd(M);
    return svd.singularValues()[0];
}

// Anything that can evaluate a quadratic acceleration Gamma(x, X)(X, X).
using QuadraticForm = std::function<Vec4(const Vec4& x, const Vec4& X)>;

// Sampled lower approximation of the sup distance between two connections.
inline double connection_distance(const QuadraticForm& c1, const QuadraticForm& c2,
                                  const std::vector<Vec4>& probes, const ObserverMetric& bar,
                                  const Vec4& x)
{
    if (probes.empty()) throw DomainError("connection_distance: empty probe set");
    double best = 0.0;
    for (const auto& X : probes) {
        const double nx = bar.norm(X);
        if (!(nx > 0.0)) throw DomainError("connection_distance: probe with zero norm");
        best = std::max(best, bar.norm(c1(x, X) - c2(x, X)) / nx);
    }
    return best;
}

} // namespace lorentzavg

#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>

namespace lorentzavg {

using Vec4 = Eigen::Vector4d;
using Mat4 = Eigen::Matrix4d;

// Rank-(1,2) table: c[i](j, k) holds the component with upper index i and
// lower indices j, k.
struct Coeffs {
    std::array<Mat4, 4> c{Mat4::Zero(), Mat4::Zero(), Mat4::Zero(), Mat4::Zero()};

    static Coeffs zero() { return {}; }

    double operator()(int i, int j, int k) const { return c[i](j, k); }
    double& operator()(int i, int j, int k) { return c[i](j, k); }

    Vec4 contract(const Vec4& a, const Vec4& b) const
    {
        Vec4 r;
        for (int i = 0; i < 4; ++i) r[i] = a.dot(c[i] * b);
        return r;
    }

    double max_abs() const
    {
        double m = 0.0;
        for (const auto& s : c) m = std::max(m, s.cwiseAbs().maxCoeff());
        return m;
    }

    Coeffs& operator+=(const Coeffs& o)
    {
        for (int i = 0; i < 4; ++i) c[i] += o.c[i];
        return *this;
    }
    Coeffs& operator-=(const Coeffs& o)
    {
        for (int i = 0; i < 4; ++i) c[i] -= o.c[i];
        return *this;
    }
    Coeffs& operator*=(double s)
    {
        for (auto& m : c) m *= s;
        return *this;
    }
    friend Coeffs operator+(Coeffs a, const Coeffs& b) { return a += b; }
    friend Coeffs operator-(Coeffs a, const Coeffs& b) { return a -= b; }
    friend Coeffs operator*(Coeffs a, double s) { return a *= s; }
    friend Coeffs operator*(double s, Coeffs a) { return a *= s; }
};

// Fully contravariant rank-3 tensor, t[m](s, l).
using Rank3 = Coeffs;

// Rank-(1,3) table: r[i][j](k, m).
struct Curvature {
    std::array<std::array<Mat4, 4>, 4> r{};

    Curvature()
    {
        for (auto& row : r)
            for (auto& m : row) m.setZero();
    }
    double operator()(int i, int j, int k, int m) const { return r[i][j](k, m); }
    double& operator()(int i, int j, int k, int m) { return r[i][j](k, m); }
};

inline Rank3 outer3(const Vec4& a, const Vec4& b, const Vec4& c)
{
    Rank3 t;
    for (int m = 0; m < 4; ++m) t.c[m] = a[m] * (b * c.transpose());
    return t;
}

inline Vec4 unit(int axis)
{
    Vec4 e = Vec4::Zero();
    e[axis] = 1.0;
    return e;
}

} // namespace lorentzavg

#include <lorentzavg/distribution.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

using namespace lorentzavg;

namespace {

Ensemble two_samples(const Vec4& a, const Vec4& b)
{
    Ensemble e;
    e.samples = {{Vec4::Zero(), a, 1.0}, {Vec4::Zero(), b, 1.0}};
    return e;
}

// <cosh r> for r uniform in a ball of radius rc, by composite Simpson.
double mean_cosh_over_ball(double rc, int intervals)
{
    const double h = rc / intervals;
    double s = 0.0;
    for (int k = 0; k <= intervals; ++k) {
        const double r = k * h;
        const double w = (k == 0 || k == intervals) ? 1.0 : (k % 2 ? 4.0 : 2.0);
        s += w * r * r * std::cosh(r);
    }
    return 3.0 / (rc * rc * rc) * s * h / 3.0;
}

} // namespace

TEST(Lift, KnownValues)
{
    EXPECT_EQ(lift(Eigen::Vector3d::Zero()), Vec4(1, 0, 0, 0));
    const Vec4 y = lift(Eigen::Vector3d(3, 0, 4));
    EXPECT_DOUBLE_EQ(y[0], std::sqrt(26.0));
    EXPECT_EQ(y.tail<3>(), Eigen::Vector3d(3, 0, 4));
}

TEST(Lift, LandsOnHyperboloid)
{
    Rng rng(1);
    const Metric eta;
    for (int n = 0; n < 1000; ++n) {
        const Vec4 y = lift(Eigen::Vector3d(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)), eta);
        EXPECT_NEAR(eta.square(y), 1.0, 1e-14);
        EXPECT_GT(y[0], 0.0);
    }
}

TEST(Lift, RejectsCurvedMetric)
{
    Mat4 g = Metric::minkowski().components();
    g(0, 0) = 2.0;
    EXPECT_THROW(lift(Eigen::Vector3d::Zero(), Metric(g)), DomainError);
}

TEST(Moments, DeltaEnsemble)
{
    const Vec4 y0 = lift(Eigen::Vector3d(0.1, 2.0, -0.3));
    const auto m = moments(delta_ensemble(y0));
    EXPECT_EQ(m.mean, y0);
    EXPECT_TRUE(m.second().isApprox(y0 * y0.transpose(), 1e-15));
    const Rank3 t = m.third(), ref = outer3(y0, y0, y0);
    EXPECT_LT((t - ref).max_abs(), 1e-14);
}

TEST(Moments, TwoSamplesMean)
{
    const Vec4 a = lift(Eigen::Vector3d(0.5, 0, 0)), b = lift(Eigen::Vector3d(0, -1, 0));
    EXPECT_TRUE(moments(two_samples(a, b)).mean.isApprox(0.5 * (a + b)));
}

TEST(Moments, RawTensorsMatchDirectSums)
{
    const auto ens = rapidity_cap(1.0, 0.3, 500, 3);
    const auto m = moments(ens);
    Mat4 s2 = Mat4::Zero();
    Rank3 s3;
    for (const auto& s : ens.samples) {
        s2 += s.y * s.y.transpose();
        s3 += outer3(s.y, s.y, s.y);
    }
    s2 /= static_cast<double>(ens.size());
    s3 *= 1.0 / static_cast<double>(ens.size());
    EXPECT_LT((m.second() - s2).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((m.third() - s3).max_abs(), 1e-12);
    const Rank3 t = m.third();
    for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b)
            for (int c = 0; c < 4; ++c) {
                EXPECT_NEAR(t(a, b, c), t(b, a, c), 1e-13);
                EXPECT_NEAR(t(a, b, c), t(c, b, a), 1e-13);
            }
    const Metric eta;
    EXPECT_NEAR((eta.components().cwiseProduct(m.second())).sum(), 1.0, 1e-10);
}

TEST(Moments, CapMeanAgainstQuadrature)
{
    const double r0 = 3.0, rc = 0.1;
    const auto ens = rapidity_cap(r0, rc, 100000, 17);
    const auto m = moments(ens);
    double var = 0.0;
    for (const auto& s : ens.samples) var += (s.y[0] - m.mean[0]) * (s.y[0] - m.mean[0]);
    const double se = std::sqrt(var / ens.size() / ens.size());
    const double quad = std::cosh(r0) * mean_cosh_over_ball(rc, 1000000);
    EXPECT_LT(std::abs(m.mean[0] - quad), 3.0 * se);
    const double quad_par = std::sinh(r0) * mean_cosh_over_ball(rc, 1000000);
    EXPECT_LT(std::abs(m.mean[2] - quad_par), 3.0 * std::sqrt(m.central2(2, 2) / ens.size()));
}

TEST(Moments, PermutationAndWeightScaleInvariance)
{
    auto ens = rapidity_cap(0.5, 0.2, 200, 5);
    Rng rng(9);
    for (auto& s : ens.samples) s.w = rng.uniform(0.5, 2.0);
    const auto m = moments(ens);
    auto perm = ens;
    std::reverse(perm.samples.begin(), perm.samples.end());
    for (auto& s : perm.samples) s.w *= 3.5;
    const auto p = moments(perm);
    EXPECT_LT((m.mean - p.mean).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_LT((m.central2 - p.central2).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_LT((m.central3 - p.central3).max_abs(), 1e-14);
}

TEST(Moments, RejectsEmptyOrWeightless)
{
    EXPECT_THROW(moments(Ensemble{}), DomainError);
    auto e = delta_ensemble(Vec4(1, 0, 0, 0));
    e.samples[0].w = 0.0;
    EXPECT_THROW(moments(e), DomainError);
}

TEST(Diameter, KnownValues)
{
    const auto bar = lab_metric();
    EXPECT_EQ(diameter_alpha(delta_ensemble(Vec4(1, 0, 0, 0)), bar), 0.0);
    const auto e = two_samples(lift(Eigen::Vector3d::Zero()), lift(Eigen::Vector3d(0.3, 0, 0)));
    const double expected = std::sqrt(std::pow(std::sqrt(1.09) - 1.0, 2) + 0.09);
    EXPECT_NEAR(diameter_alpha(e, bar), expected, 1e-15);
}

TEST(Diameter, MatchesBruteForce)
{
    const auto bar = lab_metric();
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto ens = rapidity_cap(2.0, 0.05, 1000, seed);
        EXPECT_EQ(diameter_alpha(ens, bar), diameter_alpha_bruteforce(ens, bar));
        const auto ball = momentum_ball(7.0, 0.02, 1000, seed);
        EXPECT_EQ(diameter_alpha(ball, bar), diameter_alpha_bruteforce(ball, bar));
    }
}

TEST(Diameter, CapBoundedByAnalyticValue)
{
    const auto ens = rapidity_cap(2.0, 0.05, 20000, 4);
    const double a = diameter_alpha(ens, lab_metric());
    EXPECT_LE(a, ens.params.at("alpha") * (1 + 1e-12));
    EXPECT_GT(a, 0.95 * ens.params.at("alpha"));
}

TEST(Energy, InfimumOfLabGamma)
{
    Ensemble e;
    for (double g : {10.0, 12.5, 11.2}) e.samples.push_back({Vec4::Zero(), Vec4(g, std::sqrt(g * g - 1), 0, 0), 1.0});
    EXPECT_EQ(energy(e), 10.0);
    EXPECT_EQ(energy(delta_ensemble(Vec4(1, 0, 0, 0))), 1.0);
}

TEST(Energy, BoostedCapLowerEdge)
{
    const auto ens = rapidity_cap(5.0, 0.1, 10000, 2);
    const double e = energy(ens), edge = std::cosh(4.9);
    EXPECT_GE(e, edge * (1 - 1e-12));
    EXPECT_LT(e / edge - 1.0, 5e-3);
}

TEST(Deltas, BasicIdentities)
{
    const Vec4 y0 = lift(Eigen::Vector3d(0, 1, 0));
    for (const auto& d : deltas(delta_ensemble(y0))) EXPECT_EQ(d, Vec4::Zero());
    const auto pair = deltas(two_samples(lift(Eigen::Vector3d(0.5, 0, 0)), lift(Eigen::Vector3d(0, 0.1, 0))));
    EXPECT_LT((pair[0] + pair[1]).cwiseAbs().maxCoeff(), 1e-15);
    auto ens = rapidity_cap(1.5, 0.2, 1000, 6);
    Rng rng(2);
    for (auto& s : ens.samples) s.w = rng.uniform();
    const auto m = moments(ens);
    const auto d = deltas(ens, m);
    Vec4 sum = Vec4::Zero();
    for (std::size_t a = 0; a < d.size(); ++a) sum += ens.samples[a].w * d[a];
    EXPECT_LT(sum.norm() / m.vol, 1e-12);
}

TEST(Deltas, BoundsFromDiameter)
{
    const auto bar = lab_metric();
    const Metric eta;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const auto ens = momentum_ball(4.0, 0.05 * seed, 2000, seed);
        const double alpha = diameter_alpha(ens, bar);
        const auto m = moments(ens);
        const auto d = deltas(ens, m);
        for (std::size_t a = 0; a < d.size(); ++a) {
            EXPECT_LE(bar.norm(d[a]), 2 * alpha);
            EXPECT_LE(std::abs(eta.dot(d[a], ens.samples[a].y)), 2 * alpha + alpha * alpha);
        }
    }
}

TEST(Generators, MomentumBallHitsTargets)
{
    const auto ens = momentum_ball(10.0, 0.02, 20000, 1);
    const double alpha = diameter_alpha(ens, lab_metric());
    EXPECT_LE(alpha, 0.02 * (1 + 1e-9));
    EXPECT_GT(alpha, 0.019);
    EXPECT_GE(energy(ens), 10.0 * (1 - 1e-12));
    EXPECT_LT(energy(ens), 10.0 * (1 + 1e-4));
    for (const auto& s : ens.samples) EXPECT_NEAR(Metric().square(s.y), 1.0, 1e-12);
}

TEST(Generators, SameSeedSameSamples)
{
    const auto a = rapidity_gaussian(1.0, 0.1, 3.0, 300, 42);
    const auto b = rapidity_gaussian(1.0, 0.1, 3.0, 300, 42);
    for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(a.samples[k].y, b.samples[k].y);
}

TEST(Generators, LatticeLayoutReplicatesVelocities)
{
    SpatialLayout lay{SpatialLayout::Kind::lattice, 0.0, 0.5, 3};
    const auto ens = momentum_ball(3.0, 0.1, 10, 1, 2, lay);
    ASSERT_EQ(ens.size(), 270u);
    EXPECT_EQ(ens.samples[0].y, ens.samples[10].y);
    EXPECT_EQ(ens.samples[0].x, Vec4(0, -0.5, -0.5, -0.5));
}

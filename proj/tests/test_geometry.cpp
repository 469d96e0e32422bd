#include <lorentzavg/connections.hpp>
#include <lorentzavg/distribution.hpp>
#include <lorentzavg/geometry.hpp>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

using namespace lorentzavg;

namespace {

Observer boosted(double r, int axis = 1)
{
    Observer o;
    o.U = boost(Vec4(1, 0, 0, 0), r, axis);
    o.frame = "boosted";
    return o;
}

Mat4 random_matrix(Rng& rng)
{
    Mat4 m;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) m(i, j) = rng.uniform(-1.0, 1.0);
    return m;
}

} // namespace

TEST(EtaBar, LabFrameIsIdentity)
{
    const auto bar = eta_bar(Metric::minkowski(), Observer::lab());
    EXPECT_TRUE(bar.components().isApprox(Mat4::Identity()));
    EXPECT_DOUBLE_EQ(bar.inner(unit(1), unit(1)), 1.0);
}

TEST(EtaBar, BoostedObserverIsSymmetricPositiveDefinite)
{
    const auto bar = eta_bar(Metric::minkowski(), boosted(0.5));
    const Mat4& m = bar.components();
    EXPECT_LT((m - m.transpose()).cwiseAbs().maxCoeff(), 1e-15);
    Eigen::SelfAdjointEigenSolver<Mat4> es(m);
    EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
    // -eta + 2 U U^T has eigenvalues e^{2r}, e^{-2r}, 1, 1
    EXPECT_NEAR(es.eigenvalues().maxCoeff(), std::exp(1.0), 1e-12);
    EXPECT_NEAR(es.eigenvalues().minCoeff(), std::exp(-1.0), 1e-12);
}

TEST(EtaBar, RejectsBadObservers)
{
    Observer spacelike;
    spacelike.U = Vec4(0.5, 1.0, 0.0, 0.0);
    EXPECT_THROW(eta_bar(Metric::minkowski(), spacelike), DomainError);
    Observer past;
    past.U = Vec4(-1.0, 0.0, 0.0, 0.0);
    EXPECT_THROW(eta_bar(Metric::minkowski(), past), DomainError);
    Observer unnormalized;
    unnormalized.U = Vec4(2.0, 0.0, 0.0, 0.0);
    EXPECT_THROW(eta_bar(Metric::minkowski(), unnormalized), DomainError);
}

TEST(EtaBar, PositiveDefiniteForRandomBoosts)
{
    Rng rng(7);
    for (int n = 0; n < 200; ++n) {
        Eigen::Vector3d w(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3));
        Observer o;
        o.U = from_rapidity(w);
        const auto bar = eta_bar(Metric::minkowski(), o, 1e-8);
        Eigen::SelfAdjointEigenSolver<Mat4> es(bar.components());
        EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
    }
}

TEST(OpNorm, IdentityAndZero)
{
    const auto bar = lab_metric();
    EXPECT_NEAR(op_norm(Mat4::Identity(), bar), 1.0, 1e-15);
    EXPECT_EQ(op_norm(Mat4::Zero(), bar), 0.0);
}

TEST(OpNorm, ConstantMagneticField)
{
    Mat4 f = Mat4::Zero();
    f(1, 2) = 2.0;
    f(2, 1) = -2.0;
    const Mat4 mixed = Metric::minkowski().raise_first(f);
    EXPECT_NEAR(op_norm(mixed, lab_metric()), 2.0, 1e-14);
}

TEST(OpNorm, MatchesSupremumFromBelow)
{
    Rng rng(11);
    const auto bar = eta_bar(Metric::minkowski(), boosted(0.7, 2));
    for (int n = 0; n < 20; ++n) {
        const Mat4 A = random_matrix(rng);
        const double norm = op_norm(A, bar);
        for (int k = 0; k < 200; ++k) {
            const Vec4 y(rng.normal(), rng.normal(), rng.normal(), rng.normal());
            EXPECT_LE(bar.norm(A * y), norm * bar.norm(y) * (1 + 1e-12));
        }
    }
}

TEST(OpNorm, Submultiplicative)
{
    Rng rng(3);
    const auto bar = eta_bar(Metric::minkowski(), boosted(0.3, 3));
    for (int n = 0; n < 500; ++n) {
        const Mat4 A = random_matrix(rng), B = random_matrix(rng);
        EXPECT_LE(op_norm(A * B, bar), op_norm(A, bar) * op_norm(B, bar) * (1 + 1e-12));
    }
}

namespace {

QuadraticForm random_form(Rng& rng)
{
    Coeffs c;
    for (int i = 0; i < 4; ++i) {
        const Mat4 m = random_matrix(rng);
        c.c[i] = m + m.transpose();
    }
    return [c](const Vec4&, const Vec4& X) { return c.contract(X, X); };
}

std::vector<Vec4> random_probes(Rng& rng, int n)
{
    std::vector<Vec4> p;
    for (int k = 0; k < n; ++k) p.push_back(lift(Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal())));
    return p;
}

} // namespace

TEST(ConnectionDistance, MetricAxioms)
{
    Rng rng(5);
    const auto bar = lab_metric();
    const Vec4 x = Vec4::Zero();
    for (int n = 0; n < 50; ++n) {
        const auto a = random_form(rng), b = random_form(rng), c = random_form(rng);
        const auto probes = random_probes(rng, 32);
        EXPECT_EQ(connection_distance(a, a, probes, bar, x), 0.0);
        const double ab = connection_distance(a, b, probes, bar, x);
        EXPECT_GE(ab, 0.0);
        EXPECT_DOUBLE_EQ(ab, connection_distance(b, a, probes, bar, x));
        EXPECT_LE(connection_distance(a, c, probes, bar, x),
                  ab + connection_distance(b, c, probes, bar, x) + 1e-12);
    }
}

TEST(ConnectionDistance, MonotoneInProbeSet)
{
    Rng rng(9);
    const auto a = random_form(rng), b = random_form(rng);
    auto probes = random_probes(rng, 8);
    double last = connection_distance(a, b, probes, lab_metric(), Vec4::Zero());
    for (int k = 0; k < 10; ++k) {
        probes.push_back(random_probes(rng, 1).front());
        const double d = connection_distance(a, b, probes, lab_metric(), Vec4::Zero());
        EXPECT_GE(d, last);
        last = d;
    }
}

TEST(ConnectionDistance, DeltaAveragedMatchesLorentzOnSupport)
{
    const auto field = make_preset("normal-dipole", {{"b0", 1.0}});
    const Vec4 y0 = lift(Eigen::Vector3d(0.2, 3.0, -0.1));
    const auto lorentz = lorentz_coeffs(field).coeffs().quadratic();
    const auto averaged = averaged_lorentz_coeffs(field, MomentSet::delta(y0)).coeffs().quadratic();
    EXPECT_LT(connection_distance(lorentz, averaged, {y0}, lab_metric(), Vec4(0, 0.1, 0.2, 0.3)), 1e-14);
}

TEST(ConnectionDistance, RejectsEmptyProbes)
{
    Rng rng(1);
    const auto a = random_form(rng);
    EXPECT_THROW(connection_distance(a, a, {}, lab_metric(), Vec4::Zero()), DomainError);
    EXPECT_THROW(connection_distance(a, a, {Vec4::Zero()}, lab_metric(), Vec4::Zero()), DomainError);
}

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "bodyfit/errors.hpp"
#include "bodyfit/rotation.hpp"
#include "test_util.hpp"

using namespace bodyfit;
using bodyfit::test::numericJacobian;

namespace {

Eigen::VectorXd vecRowMajor(const Mat3& r) {
    Eigen::VectorXd v(9);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) v[3 * i + j] = r(i, j);
    return v;
}

Eigen::MatrixXd fdJacobian(const Vec3& w, double step = 1e-5) {
    return numericJacobian([](const Eigen::VectorXd& x) { return vecRowMajor(rodrigues(Vec3(x))); }, w, step);
}

double maxRelativeError(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return (a - b).cwiseAbs().maxCoeff() / std::max(1.0, b.cwiseAbs().maxCoeff());
}

}  // namespace

TEST(Rodrigues, ZeroIsIdentity) { EXPECT_EQ(rodrigues(Vec3::Zero()), Mat3::Identity()); }

TEST(Rodrigues, QuarterTurnAboutZ) {
    Mat3 expected;
    expected << 0, -1, 0, 1, 0, 0, 0, 0, 1;
    EXPECT_LT((rodrigues(Vec3(0, 0, std::numbers::pi / 2)) - expected).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Rodrigues, RandomAxisTraceIdentity) {
    CounterRng rng(21, 0);
    for (int i = 0; i < 50; ++i) {
        const Vec3 axis = test::randomVector(rng, 3).normalized();
        const Mat3 r = rodrigues(0.7 * axis);
        EXPECT_LT((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_NEAR(r.trace(), 1 + 2 * std::cos(0.7), 1e-12);
        EXPECT_NEAR(r.determinant(), 1.0, 1e-12);
    }
}

TEST(Rodrigues, OrthonormalOverManyScales) {
    CounterRng rng(22, 0);
    for (double scale : {1e-12, 1e-9, 1e-8, 1e-6, 1e-3, 0.5, 3.0, 10.0, 100.0}) {
        for (int i = 0; i < 20; ++i) {
            const Mat3 r = rodrigues(scale * test::randomVector(rng, 3));
            EXPECT_LT((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-12) << scale;
        }
    }
}

TEST(Rodrigues, ContinuousAcrossSeriesThreshold) {
    const Vec3 axis = Vec3(1, 2, -2).normalized();
    const Mat3 below = rodrigues((1e-8 * (1 - 1e-9)) * axis);
    const Mat3 above = rodrigues((1e-8 * (1 + 1e-9)) * axis);
    EXPECT_LT((below - above).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Rodrigues, RejectsNonFinite) {
    EXPECT_THROW(rodrigues(Vec3(std::numeric_limits<double>::quiet_NaN(), 0, 0)), ValidationError);
    EXPECT_THROW(rodriguesJacobian(Vec3(0, std::numeric_limits<double>::infinity(), 0)), ValidationError);
}

TEST(RodriguesJacobian, AtZeroIsSkewBasis) {
    const RotationJacobian jac = rodriguesJacobian(Vec3::Zero());
    for (int k = 0; k < 3; ++k) {
        const Mat3 e = skew(Vec3::Unit(k));
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) EXPECT_EQ(jac(3 * i + j, k), e(i, j));
    }
}

TEST(RodriguesJacobian, MatchesFiniteDifferencesAtRandomPoints) {
    CounterRng rng(23, 0);
    for (int i = 0; i < 100; ++i) {
        const Vec3 w = test::randomVector(rng, 3, 1.2);
        EXPECT_LT(maxRelativeError(rodriguesJacobian(w), fdJacobian(w)), 1e-5) << w.transpose();
    }
}

TEST(RodriguesJacobian, MatchesFiniteDifferencesNearZero) {
    CounterRng rng(24, 0);
    for (double scale : {1e-9, 1e-6, 1e-4, 5e-3, 1e-2, 2e-2}) {
        const Vec3 w = scale * test::randomVector(rng, 3).normalized();
        EXPECT_LT(maxRelativeError(rodriguesJacobian(w), fdJacobian(w, 1e-6)), 1e-5) << scale;
    }
}

TEST(RodriguesJacobian, QuarterTurnAlongZ) {
    const double phi = std::numbers::pi / 2;
    const RotationJacobian jac = rodriguesJacobian(Vec3(0, 0, phi));
    Mat3 expected;
    expected << -std::sin(phi), -std::cos(phi), 0, std::cos(phi), -std::sin(phi), 0, 0, 0, 0;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) EXPECT_NEAR(jac(3 * i + j, 2), expected(i, j), 1e-14);
}

TEST(AxisAngle, RoundTripAndCanonical) {
    CounterRng rng(25, 0);
    for (int i = 0; i < 50; ++i) {
        const Vec3 w = test::randomVector(rng, 3, 1.5);
        const Vec3 back = axisAngleFromRotation(rodrigues(w));
        EXPECT_LE(back.norm(), std::numbers::pi + 1e-12);
        EXPECT_LT((rodrigues(back) - rodrigues(w)).cwiseAbs().maxCoeff(), 1e-10);
        const Vec3 c = canonicalAxisAngle(w);
        EXPECT_LE(c.norm(), std::numbers::pi + 1e-12);
        EXPECT_LT((rodrigues(c) - rodrigues(w)).cwiseAbs().maxCoeff(), 1e-10);
    }
}

TEST(AxisAngle, FullTurnWrapGivesSameRotation) {
    const Vec3 w(0.3, -0.4, 0.5);
    const Vec3 wrapped = w * (1 + 2 * std::numbers::pi / w.norm());
    EXPECT_LT((rodrigues(w) - rodrigues(wrapped)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((canonicalAxisAngle(wrapped) - w).norm(), 1e-12);
}

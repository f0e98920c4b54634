#include "bodyfit/rotation.hpp"

#include <Eigen/Geometry>
#include <cmath>

#include "bodyfit/errors.hpp"

namespace bodyfit {

namespace {

constexpr double kValueSeriesBelow = 1e-8;
// Derivative coefficients lose precision much earlier than the values.
constexpr double kDerivSeriesBelow = 1e-2;

struct Coefficients {
    double a;       // sin(t)/t
    double b;       // (1 - cos(t))/t^2
    double da;      // (1/t) d a/dt
    double db;      // (1/t) d b/dt
};

Coefficients coefficients(double t) {
    Coefficients c{};
    const double t2 = t * t;
    if (t < kValueSeriesBelow) {
        c.a = 1.0 - t2 / 6.0;
        c.b = 0.5 - t2 / 24.0;
    } else {
        const double s = std::sin(0.5 * t);
        c.a = std::sin(t) / t;
        c.b = 2.0 * s * s / t2;
    }
    if (t < kDerivSeriesBelow) {
        c.da = -1.0 / 3.0 + t2 / 30.0 - t2 * t2 / 840.0;
        c.db = -1.0 / 12.0 + t2 / 180.0 - t2 * t2 / 6720.0;
    } else {
        const double s = std::sin(t);
        const double co = std::cos(t);
        c.da = (t * co - s) / (t2 * t);
        c.db = (t * s - 2.0 * (1.0 - co)) / (t2 * t2);
    }
    return c;
}

void requireFinite(const Vec3& w) {
    if (!w.allFinite()) throw ValidationError("rodrigues: non-finite axis-angle");
}

}  // namespace

Mat3 skew(const Vec3& v) {
    Mat3 m;
    m << 0.0, -v.z(), v.y(),
         v.z(), 0.0, -v.x(),
         -v.y(), v.x(), 0.0;
    return m;
}

Vec3 vee(const Mat3& m) {
    return Vec3(0.5 * (m(2, 1) - m(1, 2)), 0.5 * (m(0, 2) - m(2, 0)), 0.5 * (m(1, 0) - m(0, 1)));
}

Mat3 rodrigues(const Vec3& w) {
    requireFinite(w);
    const Coefficients c = coefficients(w.norm());
    const Mat3 k = skew(w);
    return Mat3::Identity() + c.a * k + c.b * (k * k);
}

RotationJacobian rodriguesJacobian(const Vec3& w) {
    requireFinite(w);
    const Coefficients c = coefficients(w.norm());
    const Mat3 k = skew(w);
    const Mat3 k2 = k * k;
    RotationJacobian jac;
    for (int i = 0; i < 3; ++i) {
        const Mat3 e = skew(Vec3::Unit(i));
        const Mat3 d = c.a * e + c.b * (e * k + k * e) + (c.da * w[i]) * k + (c.db * w[i]) * k2;
        for (int r = 0; r < 3; ++r)
            for (int col = 0; col < 3; ++col) jac(r * 3 + col, i) = d(r, col);
    }
    return jac;
}

Vec3 axisAngleFromRotation(const Mat3& rotation) {
    const Eigen::AngleAxisd aa(rotation);
    double angle = aa.angle();
    Vec3 axis = aa.axis();
    if (angle > M_PI) {
        angle = 2.0 * M_PI - angle;
        axis = -axis;
    }
    return axis * angle;
}

Vec3 canonicalAxisAngle(const Vec3& w) {
    if (w.norm() <= M_PI) return w;
    return axisAngleFromRotation(rodrigues(w));
}

}  // namespace bodyfit

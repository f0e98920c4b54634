#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace bodyfit {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
// Derivative of a row-major vec(R) with respect to an axis-angle 3-vector.
using RotationJacobian = Eigen::Matrix<double, 9, 3>;

Mat3 skew(const Vec3& v);
// Inverse of skew() applied to the antisymmetric part of m.
Vec3 vee(const Mat3& m);

// Axis-angle to rotation matrix. Throws ValidationError on non-finite input.
Mat3 rodrigues(const Vec3& axisAngle);

// d vec(R) / d axisAngle, rows in row-major order of R (r*3 + c).
RotationJacobian rodriguesJacobian(const Vec3& axisAngle);

// Rotation matrix to axis-angle with norm in [0, pi].
Vec3 axisAngleFromRotation(const Mat3& rotation);

// Maps an axis-angle vector to the equivalent one with norm in [0, pi].
Vec3 canonicalAxisAngle(const Vec3& axisAngle);

}  // namespace bodyfit

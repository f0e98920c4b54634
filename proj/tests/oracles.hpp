#pragma once

// Independent reference implementations used to cross-check the library.

#include <Eigen/Dense>
#include <cmath>

#include "bodyfit/body_model.hpp"
#include "bodyfit/renderer.hpp"

namespace bodyfit::oracle {

inline double sumSquaredDistances(const RowMatX3& a, const RowMatX3& b) {
    double total = 0;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        double d2 = 0;
        for (int c = 0; c < 3; ++c) d2 += (a(i, c) - b(i, c)) * (a(i, c) - b(i, c));
        total += d2;
    }
    return total;
}

inline double reprojection(const RowMatX2& kpHat, const RowMatX2& kp, const Image& silHat, const Image& sil, double mu) {
    double k = 0;
    for (Eigen::Index i = 0; i < kp.rows(); ++i) {
        const double dx = kpHat(i, 0) - kp(i, 0), dy = kpHat(i, 1) - kp(i, 1);
        k += dx * dx + dy * dy;
    }
    double s = 0;
    for (Eigen::Index j = 0; j < sil.rows(); ++j)
        for (Eigen::Index i = 0; i < sil.cols(); ++i) s += (silHat(j, i) - sil(j, i)) * (silHat(j, i) - sil(j, i));
    return mu * k + s;
}

struct Confusion {
    double accuracy, f1;
};

inline Confusion confusion(const Mask& hat, const Mask& ref) {
    double tp = 0, tn = 0, fp = 0, fn = 0;
    for (Eigen::Index j = 0; j < ref.rows(); ++j)
        for (Eigen::Index i = 0; i < ref.cols(); ++i) {
            const bool p = hat(j, i), g = ref(j, i);
            tp += p && g;
            tn += !p && !g;
            fp += p && !g;
            fn += !p && g;
        }
    const double accuracy = (tp + tn) / (tp + tn + fp + fn);
    if (tp + fp + fn == 0) return {accuracy, 1.0};
    const double precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    const double recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    const double f1 = precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
    return {accuracy, f1};
}

// Umeyama's SVD solution for the similarity aligning a onto b, then the mean
// residual norm.
inline double procrustesMeanError(const RowMatX3& a, const RowMatX3& b) {
    const Eigen::Index n = a.rows();
    const Eigen::Vector3d ma = a.colwise().mean().transpose(), mb = b.colwise().mean().transpose();
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    double varA = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Vector3d x = a.row(i).transpose() - ma, y = b.row(i).transpose() - mb;
        cov += y * x.transpose();
        varA += x.squaredNorm();
    }
    cov /= static_cast<double>(n);
    varA /= static_cast<double>(n);
    const Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
    if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0) d(2, 2) = -1;
    const Eigen::Matrix3d r = svd.matrixU() * d * svd.matrixV().transpose();
    const double s = (svd.singularValues().asDiagonal() * d).trace() / varA;
    const Eigen::Vector3d t = mb - s * r * ma;
    double total = 0;
    for (Eigen::Index i = 0; i < n; ++i) total += (s * r * a.row(i).transpose() + t - b.row(i).transpose()).norm();
    return total / static_cast<double>(n);
}

}  // namespace bodyfit::oracle

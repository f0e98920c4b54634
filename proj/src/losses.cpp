#include "bodyfit/losses.hpp"

#include <cmath>

#include "bodyfit/errors.hpp"

namespace bodyfit {

void validateLossConfig(const LossConfig& cfg) {
    if (!(cfg.mu > 0)) throw ValidationError("mu must be positive");
    if (!(cfg.paramVertexMix >= 0)) throw ValidationError("paramVertexMix must be nonnegative");
    if (!(cfg.gmSigmaImage > 0) || !(cfg.gmSigmaAnchor > 0)) throw ValidationError("Geman-McClure sigma must be positive");
}

double gemanMcClure(double e, double sigma) {
    if (!(sigma > 0)) throw ValidationError("Geman-McClure sigma must be positive");
    const double e2 = e * e;
    return e2 / (e2 + sigma * sigma);
}

double gemanMcClureDerivative(double e, double sigma) {
    if (!(sigma > 0)) throw ValidationError("Geman-McClure sigma must be positive");
    const double s2 = sigma * sigma;
    const double den = e * e + s2;
    return 2.0 * e * s2 / (den * den);
}

namespace {

void checkParamDims(const Eigen::VectorXd& thetaHat, const Eigen::VectorXd& theta, const Eigen::VectorXd& betaHat,
                    const Eigen::VectorXd& beta) {
    if (thetaHat.size() != theta.size() || betaHat.size() != beta.size())
        throw ValidationError("parameter loss: dimension mismatch");
    if (theta.size() % 3 != 0) throw ValidationError("parameter loss: pose length must be a multiple of 3");
}

Eigen::Matrix<double, 9, 1> vecRowMajor(const Mat3& r) {
    Eigen::Matrix<double, 9, 1> v;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) v[3 * i + j] = r(i, j);
    return v;
}

PointLoss pointLoss(const RowMatX3& hat, const RowMatX3& ref, bool normalize, const char* what) {
    if (hat.rows() != ref.rows()) throw ValidationError(std::string(what) + ": count mismatch");
    PointLoss out;
    const RowMatX3 diff = hat - ref;
    const double scale = normalize && hat.rows() > 0 ? 1.0 / static_cast<double>(hat.rows()) : 1.0;
    out.value = scale * diff.squaredNorm();
    out.dHat = 2.0 * scale * diff;
    return out;
}

}  // namespace

ParamLoss paramLossAxisAngle(const Eigen::VectorXd& thetaHat, const Eigen::VectorXd& theta,
                             const Eigen::VectorXd& betaHat, const Eigen::VectorXd& beta) {
    checkParamDims(thetaHat, theta, betaHat, beta);
    ParamLoss out;
    const Eigen::VectorXd rt = thetaHat - theta;
    const Eigen::VectorXd rb = betaHat - beta;
    out.value = rt.squaredNorm() + rb.squaredNorm();
    out.dThetaHat = 2.0 * rt;
    out.dBetaHat = 2.0 * rb;
    return out;
}

ParamLoss paramLossRotMat(const Eigen::VectorXd& thetaHat, const Eigen::VectorXd& theta,
                          const Eigen::VectorXd& betaHat, const Eigen::VectorXd& beta) {
    checkParamDims(thetaHat, theta, betaHat, beta);
    ParamLoss out;
    out.dThetaHat.resize(thetaHat.size());
    for (Eigen::Index j = 0; j < thetaHat.size() / 3; ++j) {
        const Vec3 wHat = thetaHat.segment<3>(3 * j);
        const Eigen::Matrix<double, 9, 1> diff = vecRowMajor(rodrigues(wHat) - rodrigues(theta.segment<3>(3 * j)));
        out.value += diff.squaredNorm();
        out.dThetaHat.segment<3>(3 * j) = 2.0 * rodriguesJacobian(wHat).transpose() * diff;
    }
    const Eigen::VectorXd rb = betaHat - beta;
    out.value += rb.squaredNorm();
    out.dBetaHat = 2.0 * rb;
    return out;
}

PointLoss perVertexLoss(const Mesh& meshHat, const Mesh& mesh, bool normalize) {
    return pointLoss(meshHat.vertices, mesh.vertices, normalize, "perVertexLoss");
}

PointLoss jointLoss(const JointSet& jointsHat, const JointSet& joints, bool normalize) {
    return pointLoss(jointsHat.joints, joints.joints, normalize, "jointLoss");
}

ReprojectionLoss reprojectionLoss(const Keypoints2D& kpHat, const Keypoints2D& kp, const Image& silHat,
                                  const Image& sil, const LossConfig& cfg) {
    validateLossConfig(cfg);
    if (kpHat.points.rows() != kp.points.rows()) throw ValidationError("reprojectionLoss: keypoint count mismatch");
    if (silHat.rows() != sil.rows() || silHat.cols() != sil.cols())
        throw ValidationError("reprojectionLoss: silhouette size mismatch");
    if (cfg.confidenceWeighted && kp.confidences.size() != kp.points.rows())
        throw ValidationError("reprojectionLoss: confidence count mismatch");
    ReprojectionLoss out;
    const Eigen::Index m = kp.points.rows();
    const double kpScale = cfg.mu * (cfg.normalize && m > 0 ? 1.0 / static_cast<double>(m) : 1.0);
    out.dKeypoints = RowMatX2::Zero(m, 2);
    for (Eigen::Index i = 0; i < m; ++i) {
        const double c = cfg.confidenceWeighted ? kp.confidences[i] : 1.0;
        const Eigen::RowVector2d r = kpHat.points.row(i) - kp.points.row(i);
        out.keypointTerm += kpScale * c * r.squaredNorm();
        out.dKeypoints.row(i) = 2.0 * kpScale * c * r;
    }
    const double silScale = cfg.normalize && sil.size() > 0 ? 1.0 / static_cast<double>(sil.size()) : 1.0;
    const Image diff = silHat - sil;
    out.silhouetteTerm = silScale * diff.squaredNorm();
    out.dSilhouette = 2.0 * silScale * diff;
    out.value = out.keypointTerm + out.silhouetteTerm;
    return out;
}

}  // namespace bodyfit

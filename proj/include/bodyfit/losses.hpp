#pragma once

#include <Eigen/Core>

#include "bodyfit/body_model.hpp"
#include "bodyfit/renderer.hpp"

namespace bodyfit {

struct LossConfig {
    double mu = 10.0;              // keypoint weight in the reprojection loss
    double paramVertexMix = 1.0;   // weight of the vertex/joint term against the parameter loss
    double gmSigmaImage = 100.0;   // pixels
    double gmSigmaAnchor = 0.5;    // radians
    bool confidenceWeighted = false;
    bool normalize = false;        // divide sums by their term counts
};

void validateLossConfig(const LossConfig& cfg);

// rho(e) = e^2 / (e^2 + sigma^2)
double gemanMcClure(double residual, double sigma);
double gemanMcClureDerivative(double residual, double sigma);

struct ParamLoss {
    double value = 0.0;
    Eigen::VectorXd dThetaHat;
    Eigen::VectorXd dBetaHat;
};

// |thetaHat - theta|^2 + |betaHat - beta|^2
ParamLoss paramLossAxisAngle(const Eigen::VectorXd& thetaHat, const Eigen::VectorXd& theta,
                             const Eigen::VectorXd& betaHat, const Eigen::VectorXd& beta);
// sum_j |R(thetaHat_j) - R(theta_j)|_F^2 + |betaHat - beta|^2
ParamLoss paramLossRotMat(const Eigen::VectorXd& thetaHat, const Eigen::VectorXd& theta,
                          const Eigen::VectorXd& betaHat, const Eigen::VectorXd& beta);

struct PointLoss {
    double value = 0.0;
    RowMatX3 dHat;
};

// sum_i |hat_i - ref_i|^2 over mesh vertices
PointLoss perVertexLoss(const Mesh& meshHat, const Mesh& mesh, bool normalize = false);
// sum_i |hat_i - ref_i|^2 over joints
PointLoss jointLoss(const JointSet& jointsHat, const JointSet& joints, bool normalize = false);

struct ReprojectionLoss {
    double value = 0.0;
    double keypointTerm = 0.0;    // already multiplied by mu
    double silhouetteTerm = 0.0;
    RowMatX2 dKeypoints;
    Image dSilhouette;
};

// mu * sum_i c_i |kpHat_i - kp_i|^2 + sum_px (silHat - sil)^2, with c_i = 1
// unless cfg.confidenceWeighted (then the annotation confidences).
ReprojectionLoss reprojectionLoss(const Keypoints2D& kpHat, const Keypoints2D& kp, const Image& silHat,
                                  const Image& sil, const LossConfig& cfg);

}  // namespace bodyfit

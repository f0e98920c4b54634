#pragma once

#include <nlohmann/json.hpp>
#include <optional>
#include <vector>

#include "bodyfit/body_model.hpp"
#include "bodyfit/renderer.hpp"

namespace bodyfit {

struct FitWeights {
    double keypoint = 1.0;
    double silhouette = 1e-2;
    double anchor = 0.1;
    double betaPrior = 1e-3;
};

/// E = w_k sum_i c_i rho(|proj(J_i) - W_i|; sigma_k) + w_s |S_hat - S|^2
///   + w_a sum_i rho(theta_i - anchor_i; sigma_a) + w_b |beta|^2
/// with Geman-McClure rho and c_i the keypoint confidences (or 1).
struct FitProblem {
    Keypoints2D keypoints;
    std::optional<Mask> silhouette;
    PoseParams theta;  // initialization
    ShapeParams beta;
    Camera camera;
    std::optional<Eigen::VectorXd> anchor;  // pose only
    FitWeights weights;
    double gmSigmaKeypoint = 5.0;    // pixels
    double gmSigmaAnchor = 0.5;      // radians
    double temperature = 1.0;        // soft silhouette
    int maxIterations = 500;
    double tolerance = 1e-7;  // relative objective decrease
    bool optimizeCamera = true;
    bool confidenceWeighted = true;
};

void validateFitProblem(const BodyModel& model, const FitProblem& problem);

struct FitResult {
    PoseParams theta;
    ShapeParams beta;
    Camera camera;
    std::vector<double> objective;      // entry 0 at the initialization, then one per accepted step
    std::vector<double> dataObjective;  // keypoint and silhouette terms only
    int iterations = 0;
    bool converged = false;
};

// sum_i gemanMcClure(theta_i - thetaInit_i, sigma)
double anchorTerm(const Eigen::VectorXd& theta, const Eigen::VectorXd& thetaInit, double sigma);

struct FitEnergy {
    double total = 0.0;
    double keypoint = 0.0;  // weighted
    double silhouette = 0.0;
    double anchor = 0.0;
    double betaPrior = 0.0;
    double data() const { return keypoint + silhouette; }
    // d total / d (theta, beta, scale, tx, ty), filled when requested.
    Eigen::VectorXd gradient;
};

FitEnergy fitEnergy(const BodyModel& model, const FitProblem& problem, const PoseParams& theta,
                    const ShapeParams& beta, const Camera& camera, bool withGradient);

// Gradient descent with Armijo backtracking over Jacobi-scaled variables.
FitResult fit(const BodyModel& model, const FitProblem& problem);

// Camera aligning the confidence-weighted centroid and RMS spread of the
// projected joints of (theta, beta) with the observed keypoints.
Camera initCameraFromKeypoints(const BodyModel& model, const PoseParams& theta, const ShapeParams& beta,
                               const Keypoints2D& keypoints, int imageSize = kImageSize);

// Body joints at zero, root rotated upright for the y-down image.
PoseParams meanPose(const BodyModel& model);

nlohmann::json toJson(const FitProblem& problem);
FitProblem fitProblemFromJson(const nlohmann::json& doc);
nlohmann::json toJson(const FitResult& result);
FitResult fitResultFromJson(const nlohmann::json& doc);

nlohmann::json cameraToJson(const Camera& camera);
Camera cameraFromJson(const nlohmann::json& doc);
nlohmann::json keypointsToJson(const Keypoints2D& keypoints);
Keypoints2D keypointsFromJson(const nlohmann::json& doc);
nlohmann::json maskToJson(const Mask& mask);
Mask maskFromJson(const nlohmann::json& doc);

}  // namespace bodyfit

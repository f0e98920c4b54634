#include "bodyfit/fitter.hpp"

#include <cmath>
#include <limits>

#include "bodyfit/datagen.hpp"
#include "bodyfit/errors.hpp"
#include "bodyfit/losses.hpp"
#include "bodyfit/model_io.hpp"

namespace bodyfit {

namespace {

constexpr int kCameraDims = 3;
constexpr double kArmijo = 0.1;
constexpr double kMaxStep = 16.0;
constexpr int kMaxHalvings = 60;

int numVariables(const BodyModel& model) { return model.poseDim() + model.numShape() + kCameraDims; }

Eigen::VectorXd pack(const PoseParams& theta, const ShapeParams& beta, const Camera& camera) {
    Eigen::VectorXd x(theta.theta.size() + beta.beta.size() + kCameraDims);
    x << theta.theta, beta.beta, camera.scale, camera.translation;
    return x;
}

void unpack(const BodyModel& model, const Eigen::VectorXd& x, PoseParams& theta, ShapeParams& beta, Camera& camera) {
    const int d = model.poseDim(), b = model.numShape();
    theta.theta = x.head(d);
    beta.beta = x.segment(d, b);
    camera.scale = x[d + b];
    camera.translation = x.tail<2>();
}

double keypointWeight(const FitProblem& p, int i) { return p.confidenceWeighted ? p.keypoints.confidences[i] : 1.0; }

// Diagonal Gauss-Newton curvature of the objective at the initialization;
// the descent runs in variables scaled by its inverse square root.
Eigen::VectorXd curvatureScaling(const BodyModel& model, const FitProblem& p) {
    const int d = model.poseDim(), b = model.numShape(), k = model.numJoints();
    const ForwardJacobians jac = forwardJacobians(model, p.beta, p.theta);
    const RowMatX3 joints = forward(model, p.beta, p.theta).joints.joints;
    const double gm = p.weights.keypoint * 2.0 / (p.gmSigmaKeypoint * p.gmSigmaKeypoint);
    const double s2 = p.camera.scale * p.camera.scale;
    Eigen::VectorXd h = Eigen::VectorXd::Zero(numVariables(model));
    for (int i = 0; i < k; ++i) {
        const double c = gm * keypointWeight(p, i);
        for (int axis = 0; axis < 2; ++axis) {
            h.head(d) += c * s2 * jac.jointsTheta.row(3 * i + axis).transpose().cwiseAbs2();
            h.segment(d, b) += c * s2 * jac.jointsBeta.row(3 * i + axis).transpose().cwiseAbs2();
            h[d + b] += c * joints(i, axis) * joints(i, axis);
            h[d + b + 1 + axis] += c;
        }
    }
    if (p.anchor) h.head(d).array() += p.weights.anchor * 2.0 / (p.gmSigmaAnchor * p.gmSigmaAnchor);
    h.segment(d, b).array() += 2.0 * p.weights.betaPrior;
    const double floor = 1e-3 * std::max(h.mean(), std::numeric_limits<double>::min());
    Eigen::VectorXd scale(h.size());
    for (Eigen::Index i = 0; i < h.size(); ++i) scale[i] = 1.0 / std::sqrt(std::max(h[i], floor));
    return scale;
}

}  // namespace

void validateFitProblem(const BodyModel& model, const FitProblem& p) {
    const int k = model.numJoints();
    if (p.keypoints.size() != k) throw ValidationError("fit expects " + std::to_string(k) + " keypoints, got " +
                                                       std::to_string(p.keypoints.size()));
    if (p.keypoints.confidences.size() != k) throw ValidationError("fit: keypoint confidence count mismatch");
    if (p.theta.theta.size() != model.poseDim()) throw ValidationError("fit: initial theta has the wrong length");
    if (p.beta.beta.size() != model.numShape()) throw ValidationError("fit: initial beta has the wrong length");
    if (p.anchor && p.anchor->size() != model.poseDim()) throw ValidationError("fit: anchor has the wrong length");
    validateCamera(p.camera);
    if (p.silhouette && (p.silhouette->rows() != p.camera.imageSize || p.silhouette->cols() != p.camera.imageSize))
        throw ValidationError("fit: silhouette size does not match the camera image size");
    const FitWeights& w = p.weights;
    for (double v : {w.keypoint, w.silhouette, w.anchor, w.betaPrior})
        if (!(v >= 0) || !std::isfinite(v)) throw ValidationError("fit: term weights must be finite and >= 0");
    if (!(p.gmSigmaKeypoint > 0) || !(p.gmSigmaAnchor > 0)) throw ValidationError("fit: sigma values must be positive");
    if (!(p.temperature > 0)) throw ValidationError("fit: temperature must be positive");
    if (p.maxIterations <= 0) throw ValidationError("fit: iteration cap must be positive");
    if (!(p.tolerance >= 0)) throw ValidationError("fit: tolerance must be >= 0");
}

double anchorTerm(const Eigen::VectorXd& theta, const Eigen::VectorXd& thetaInit, double sigma) {
    if (theta.size() != thetaInit.size()) throw ValidationError("anchorTerm: dimension mismatch");
    if (!(sigma > 0)) throw ValidationError("anchorTerm: sigma must be positive");
    double sum = 0;
    for (Eigen::Index i = 0; i < theta.size(); ++i) sum += gemanMcClure(theta[i] - thetaInit[i], sigma);
    return sum;
}

FitEnergy fitEnergy(const BodyModel& model, const FitProblem& p, const PoseParams& theta, const ShapeParams& beta,
                    const Camera& camera, bool withGradient) {
    const int k = model.numJoints(), d = model.poseDim(), b = model.numShape();
    const PosedBody body(model, beta, theta);
    const RowMatX2 proj = projectPoints(body.joints().joints, camera);
    FitEnergy e;
    RowMatX2 dProj = RowMatX2::Zero(k, 2);
    const double s2 = p.gmSigmaKeypoint * p.gmSigmaKeypoint;
    for (int i = 0; i < k; ++i) {
        const double c = p.weights.keypoint * keypointWeight(p, i);
        if (c == 0.0) continue;
        const Eigen::RowVector2d r = proj.row(i) - p.keypoints.points.row(i);
        const double r2 = r.squaredNorm(), den = r2 + s2;
        e.keypoint += c * r2 / den;
        dProj.row(i) = c * 2.0 * s2 / (den * den) * r;
    }
    RowMatX3 dV = RowMatX3::Zero(model.numVertices(), 3);
    CameraGradient camGrad;
    if (p.silhouette && p.weights.silhouette > 0) {
        const Silhouette sil = renderSilhouette(body.mesh().vertices, model.faces, camera, p.temperature);
        const Image diff = sil.pixels - p.silhouette->cast<double>();
        e.silhouette = p.weights.silhouette * diff.squaredNorm();
        if (withGradient) {
            const Image up = 2.0 * p.weights.silhouette * diff;
            const SilhouetteGradient sg = renderSilhouetteGrad(body.mesh().vertices, model.faces, camera, p.temperature, up);
            dV = sg.vertices;
            camGrad = sg.camera;
        }
    }
    if (p.anchor) e.anchor = p.weights.anchor * anchorTerm(theta.theta, *p.anchor, p.gmSigmaAnchor);
    e.betaPrior = p.weights.betaPrior * beta.beta.squaredNorm();
    e.total = e.keypoint + e.silhouette + e.anchor + e.betaPrior;
    if (!withGradient) return e;

    const RowMatX3 dJ = projectPointsGrad(camera, dProj, k);
    const ParamGradient g = body.vjp(dV, &dJ);
    const CameraGradient kpCam = projectCameraGrad(body.joints().joints, dProj);
    e.gradient.resize(numVariables(model));
    e.gradient.head(d) = g.theta;
    e.gradient.segment(d, b) = g.beta + 2.0 * p.weights.betaPrior * beta.beta;
    if (p.anchor)
        for (int i = 0; i < d; ++i)
            e.gradient[i] += p.weights.anchor * gemanMcClureDerivative(theta.theta[i] - (*p.anchor)[i], p.gmSigmaAnchor);
    e.gradient[d + b] = camGrad.scale + kpCam.scale;
    e.gradient.tail<2>() = camGrad.translation + kpCam.translation;
    return e;
}

FitResult fit(const BodyModel& model, const FitProblem& problem) {
    validateFitProblem(model, problem);
    if (!problem.theta.theta.allFinite() || !problem.beta.beta.allFinite() || !std::isfinite(problem.camera.scale) ||
        !problem.camera.translation.allFinite())
        throw NumericalError("fit: initialization is not finite");
    FitResult res{problem.theta, problem.beta, problem.camera, {}, {}, 0, false};
    FitEnergy cur = fitEnergy(model, problem, res.theta, res.beta, res.camera, true);
    if (!std::isfinite(cur.total) || !cur.gradient.allFinite())
        throw NumericalError("fit: objective is not finite at the initialization");
    res.objective.push_back(cur.total);
    res.dataObjective.push_back(cur.data());

    Eigen::VectorXd scale = curvatureScaling(model, problem);
    if (!problem.optimizeCamera) scale.tail<kCameraDims>().setZero();
    const Eigen::VectorXd scale2 = scale.cwiseAbs2();
    Eigen::VectorXd x = pack(res.theta, res.beta, res.camera);
    double step = 1.0;
    while (res.iterations < problem.maxIterations) {
        const Eigen::VectorXd dir = -scale2.cwiseProduct(cur.gradient);
        const double slope = cur.gradient.dot(dir);
        bool accepted = false;
        FitEnergy next;
        Eigen::VectorXd xNext;
        PoseParams theta{};
        ShapeParams beta{};
        Camera camera = res.camera;
        for (int h = 0; h < kMaxHalvings; ++h, step *= 0.5) {
            xNext = x + step * dir;
            unpack(model, xNext, theta, beta, camera);
            if (!(camera.scale > 0)) continue;
            next = fitEnergy(model, problem, theta, beta, camera, false);
            if (std::isfinite(next.total) && next.total <= cur.total + kArmijo * step * slope) {
                accepted = true;
                break;
            }
        }
        if (!accepted || slope == 0.0) {
            res.converged = true;
            break;
        }
        next = fitEnergy(model, problem, theta, beta, camera, true);
        const double decrease = cur.total - next.total;
        x = xNext;
        res.theta = theta;
        res.beta = beta;
        res.camera = camera;
        cur = next;
        ++res.iterations;
        res.objective.push_back(cur.total);
        res.dataObjective.push_back(cur.data());
        step = std::min(2.0 * step, kMaxStep);
        if (decrease <= problem.tolerance * std::abs(res.objective[res.objective.size() - 2]) + 1e-15) {
            res.converged = true;
            break;
        }
    }
    return res;
}

Camera initCameraFromKeypoints(const BodyModel& model, const PoseParams& theta, const ShapeParams& beta,
                               const Keypoints2D& kp, int imageSize) {
    const RowMatX3 joints = forward(model, beta, theta).joints.joints;
    if (kp.size() != joints.rows() || kp.confidences.size() != joints.rows())
        throw ValidationError("camera init: keypoint count does not match the model joints");
    const double total = kp.confidences.sum();
    if (!(total > 0)) throw ValidationError("camera init: all keypoints have zero confidence");
    Vec2 cP = Vec2::Zero(), cW = Vec2::Zero();
    for (int i = 0; i < kp.size(); ++i) {
        cP += kp.confidences[i] * Vec2(joints(i, 0), joints(i, 1));
        cW += kp.confidences[i] * kp.points.row(i).transpose();
    }
    cP /= total;
    cW /= total;
    double spreadP = 0, spreadW = 0;
    for (int i = 0; i < kp.size(); ++i) {
        spreadP += kp.confidences[i] * (Vec2(joints(i, 0), joints(i, 1)) - cP).squaredNorm();
        spreadW += kp.confidences[i] * (kp.points.row(i).transpose() - cW).squaredNorm();
    }
    if (!(spreadP > 0) || !(spreadW > 0)) throw ValidationError("camera init: keypoints have no spread");
    Camera cam;
    cam.imageSize = imageSize;
    cam.scale = std::sqrt(spreadW / spreadP);
    cam.translation = cW - cam.scale * cP;
    return cam;
}

PoseParams meanPose(const BodyModel& model) {
    PoseParams theta = PoseParams::zero(model);
    theta.setJoint(0, globalRotation(0.0, Vec3::Zero()));
    return theta;
}

// ---------------------------------------------------------------------------

nlohmann::json cameraToJson(const Camera& c) {
    return {{"scale", formatExact(c.scale)},
            {"tx", formatExact(c.translation.x())},
            {"ty", formatExact(c.translation.y())},
            {"image_size", c.imageSize}};
}

namespace {

double readReal(const nlohmann::json& doc, const std::string& field) {
    if (!doc.contains(field)) throw IoError("missing field '" + field + "'");
    const auto& v = doc[field];
    if (v.is_string()) return parseExact(v.get<std::string>());
    if (v.is_number()) return v.get<double>();
    throw IoError("field '" + field + "' must be a number");
}

Eigen::VectorXd readVector(const nlohmann::json& doc, const std::string& field) {
    if (!doc.contains(field)) throw IoError("missing field '" + field + "'");
    const auto v = readExactArray(doc[field], field);
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

nlohmann::json vectorJson(const Eigen::VectorXd& v) { return exactArray(v.data(), static_cast<size_t>(v.size())); }

}  // namespace

Camera cameraFromJson(const nlohmann::json& doc) {
    Camera c;
    c.scale = readReal(doc, "scale");
    c.translation = Vec2(readReal(doc, "tx"), readReal(doc, "ty"));
    if (doc.contains("image_size")) c.imageSize = doc["image_size"].get<int>();
    return c;
}

nlohmann::json keypointsToJson(const Keypoints2D& kp) {
    nlohmann::json arr = nlohmann::json::array();
    for (int i = 0; i < kp.size(); ++i)
        arr.push_back({formatExact(kp.points(i, 0)), formatExact(kp.points(i, 1)), formatExact(kp.confidences[i])});
    return arr;
}

Keypoints2D keypointsFromJson(const nlohmann::json& doc) {
    if (!doc.is_array()) throw IoError("keypoints must be an array of [x, y, confidence]");
    Keypoints2D kp{RowMatX2(static_cast<Eigen::Index>(doc.size()), 2),
                   Eigen::VectorXd(static_cast<Eigen::Index>(doc.size()))};
    for (size_t i = 0; i < doc.size(); ++i) {
        const auto v = readExactArray(doc[i], "keypoints");
        if (v.size() != 3) throw IoError("each keypoint needs x, y and confidence");
        const auto r = static_cast<Eigen::Index>(i);
        kp.points(r, 0) = v[0];
        kp.points(r, 1) = v[1];
        kp.confidences[r] = v[2];
    }
    return kp;
}

nlohmann::json maskToJson(const Mask& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index y = 0; y < m.rows(); ++y) {
        std::string row;
        for (Eigen::Index x = 0; x < m.cols(); ++x) row += m(y, x) ? '1' : '0';
        rows.push_back(row);
    }
    return rows;
}

Mask maskFromJson(const nlohmann::json& doc) {
    if (!doc.is_array() || doc.empty()) throw IoError("silhouette must be a non-empty array of row strings");
    const auto h = static_cast<Eigen::Index>(doc.size());
    const auto w = static_cast<Eigen::Index>(doc[0].get<std::string>().size());
    Mask m(h, w);
    for (Eigen::Index y = 0; y < h; ++y) {
        const std::string row = doc[static_cast<size_t>(y)].get<std::string>();
        if (static_cast<Eigen::Index>(row.size()) != w) throw IoError("silhouette rows differ in length");
        for (Eigen::Index x = 0; x < w; ++x) {
            if (row[static_cast<size_t>(x)] != '0' && row[static_cast<size_t>(x)] != '1')
                throw IoError("silhouette rows may only hold '0' and '1'");
            m(y, x) = row[static_cast<size_t>(x)] == '1';
        }
    }
    return m;
}

nlohmann::json toJson(const FitProblem& p) {
    nlohmann::json doc{{"keypoints", keypointsToJson(p.keypoints)},
                       {"theta", vectorJson(p.theta.theta)},
                       {"beta", vectorJson(p.beta.beta)},
                       {"camera", cameraToJson(p.camera)},
                       {"weights",
                        {{"keypoint", formatExact(p.weights.keypoint)},
                         {"silhouette", formatExact(p.weights.silhouette)},
                         {"anchor", formatExact(p.weights.anchor)},
                         {"beta_prior", formatExact(p.weights.betaPrior)}}},
                       {"gm_sigma_keypoint", formatExact(p.gmSigmaKeypoint)},
                       {"gm_sigma_anchor", formatExact(p.gmSigmaAnchor)},
                       {"temperature", formatExact(p.temperature)},
                       {"max_iterations", p.maxIterations},
                       {"tolerance", formatExact(p.tolerance)},
                       {"optimize_camera", p.optimizeCamera},
                       {"confidence_weighted", p.confidenceWeighted}};
    if (p.silhouette) doc["silhouette"] = maskToJson(*p.silhouette);
    if (p.anchor) doc["anchor"] = vectorJson(*p.anchor);
    return doc;
}

FitProblem fitProblemFromJson(const nlohmann::json& doc) {
    try {
        FitProblem p;
        if (!doc.contains("keypoints")) throw IoError("missing field 'keypoints'");
        p.keypoints = keypointsFromJson(doc["keypoints"]);
        p.theta.theta = readVector(doc, "theta");
        p.beta.beta = readVector(doc, "beta");
        if (!doc.contains("camera")) throw IoError("missing field 'camera'");
        p.camera = cameraFromJson(doc["camera"]);
        if (doc.contains("silhouette")) p.silhouette = maskFromJson(doc["silhouette"]);
        if (doc.contains("anchor")) p.anchor = readVector(doc, "anchor");
        if (doc.contains("weights")) {
            const auto& w = doc["weights"];
            if (w.contains("keypoint")) p.weights.keypoint = readReal(w, "keypoint");
            if (w.contains("silhouette")) p.weights.silhouette = readReal(w, "silhouette");
            if (w.contains("anchor")) p.weights.anchor = readReal(w, "anchor");
            if (w.contains("beta_prior")) p.weights.betaPrior = readReal(w, "beta_prior");
        }
        if (doc.contains("gm_sigma_keypoint")) p.gmSigmaKeypoint = readReal(doc, "gm_sigma_keypoint");
        if (doc.contains("gm_sigma_anchor")) p.gmSigmaAnchor = readReal(doc, "gm_sigma_anchor");
        if (doc.contains("temperature")) p.temperature = readReal(doc, "temperature");
        if (doc.contains("max_iterations")) p.maxIterations = doc["max_iterations"].get<int>();
        if (doc.contains("tolerance")) p.tolerance = readReal(doc, "tolerance");
        if (doc.contains("optimize_camera")) p.optimizeCamera = doc["optimize_camera"].get<bool>();
        if (doc.contains("confidence_weighted")) p.confidenceWeighted = doc["confidence_weighted"].get<bool>();
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("malformed fit problem: ") + e.what());
    }
}

nlohmann::json toJson(const FitResult& r) {
    return {{"theta", vectorJson(r.theta.theta)},
            {"beta", vectorJson(r.beta.beta)},
            {"camera", cameraToJson(r.camera)},
            {"objective", exactArray(r.objective.data(), r.objective.size())},
            {"data_objective", exactArray(r.dataObjective.data(), r.dataObjective.size())},
            {"iterations", r.iterations},
            {"converged", r.converged}};
}

FitResult fitResultFromJson(const nlohmann::json& doc) {
    try {
        FitResult r;
        r.theta.theta = readVector(doc, "theta");
        r.beta.beta = readVector(doc, "beta");
        r.camera = cameraFromJson(doc.at("camera"));
        r.objective = readExactArray(doc.at("objective"), "objective");
        r.dataObjective = readExactArray(doc.at("data_objective"), "data_objective");
        r.iterations = doc.at("iterations").get<int>();
        r.converged = doc.at("converged").get<bool>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("malformed fit result: ") + e.what());
    }
}

}  // namespace bodyfit
